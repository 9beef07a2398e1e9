#include <doctest.h>

#include "sdsr/soa_controlnet.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::grad_check;
using sdsr::testing::random_tensor;

namespace {

SoanConfig small_soan() {
    SoanConfig c;
    c.channels = 8;
    c.groups = 1;
    c.window = 4;
    c.lr_size = 8;
    return c;
}

struct Restorer {
    nn::ParamStore store;
    Rng rng;
    Soan soan;
    explicit Restorer(SoanConfig cfg = small_soan(), std::uint64_t seed = 2) : rng(seed), soan(cfg, store, rng) {}
};

DualUNetConfig small_unet() {
    DualUNetConfig c;
    c.latent_channels = 4;
    c.base_channels = 8;
    c.channel_mults = {1, 2};
    c.attn_levels = {1};
    c.tascata_levels = {1};
    c.time_dim = 8;
    c.context_dim = 6;
    c.T = 100;
    return c;
}

PromptBundle prompts(int b) {
    PromptBundle p;
    p.soft_left = random_tensor({b, 4, 6}, 1);
    p.soft_right = random_tensor({b, 4, 6}, 2);
    p.hard_left = p.hard_right = random_tensor({b, 2, 6}, 3);
    p.hard_len_left = p.hard_len_right = std::vector<int>(static_cast<std::size_t>(b), 2);
    return p;
}

}  // namespace

TEST_CASE("loss mode names round-trip") {
    CHECK(soan_loss_from_string("l1") == SoanLoss::l1);
    CHECK(soan_loss_from_string("adv") == SoanLoss::adversarial);
    CHECK(soan_loss_from_string(to_string(SoanLoss::adversarial)) == SoanLoss::adversarial);
    CHECK_THROWS(soan_loss_from_string("gan"));
}

TEST_CASE("scatm at zero gain is the identity; with mirrored weights it is swap-equivariant") {
    nn::ParamStore s;
    Rng rng(4);
    ScatmParams p = make_scatm(s, "f", 8, rng);
    const ag::Var a = ag::constant(random_tensor({1, 8, 4, 4}, 5)), b = ag::constant(random_tensor({1, 8, 4, 4}, 6));
    auto [l0, r0] = scatm(a, b, p);
    CHECK(max_abs_diff(l0.value(), a.value()) == 0.0);
    CHECK(max_abs_diff(r0.value(), b.value()) == 0.0);
    p.gamma_left.mutable_value()[0] = p.gamma_right.mutable_value()[0] = 0.3;
    p.query_key_right.weight.mutable_value() = p.query_key_left.weight.value();
    p.value_right.weight.mutable_value() = p.value_left.weight.value();
    auto [l1, r1] = scatm(a, b, p);
    auto [l2, r2] = scatm(b, a, p);
    CHECK(max_abs_diff(l1.value(), r2.value()) < 1e-12);
    CHECK(max_abs_diff(r1.value(), l2.value()) < 1e-12);
    const ag::Var stacked = scatm_stacked(ag::concat({a, b}, 0), p);
    CHECK(max_abs_diff(stacked.value().slice0(0, 1), l1.value()) < 1e-12);
}

TEST_CASE("scatm gradients match finite differences") {
    nn::ParamStore s;
    Rng rng(7);
    ScatmParams p = make_scatm(s, "f", 4, rng);
    p.gamma_left.mutable_value()[0] = 0.4;
    p.gamma_right.mutable_value()[0] = -0.6;
    ag::Var a(random_tensor({1, 4, 3, 3}, 8), true), b(random_tensor({1, 4, 3, 3}, 9), true);
    const Tensor w = random_tensor({2, 4, 3, 3}, 10);
    auto loss = [&] {
        auto [l, r] = scatm(a, b, p);
        return ag::sum_all(ag::mul(ag::concat({l, r}, 0), ag::constant(w)));
    };
    std::vector<ag::Var> in{a, b};
    for (const auto& e : s.trainable()) in.push_back(e.second);
    CHECK(grad_check(loss, in, 0, 1e-5, 1e-8) < 1e-4);
}

TEST_CASE("soan upsamples by the configured scale and restore clamps") {
    Restorer r;
    const StereoImagePair lr{random_tensor({3, 8, 8}, 11, 0.0, 1.0), random_tensor({3, 8, 8}, 12, 0.0, 1.0)};
    const StereoImagePair hr = r.soan.restore(lr);
    CHECK(hr.left.shape() == Shape{3, 32, 32});
    for (double v : hr.right.vec()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Cross-view gains start at zero, so swapping inputs swaps outputs exactly.
    const StereoImagePair sw = r.soan.restore(lr.swapped());
    CHECK(max_abs_diff(sw.left, hr.right) == 0.0);
    CHECK_THROWS_AS(r.soan.restore({random_tensor({3, 8, 6}, 1), random_tensor({3, 8, 6}, 2)}), ShapeError);
}

TEST_CASE("bicubic upsampling keeps constant images constant") {
    const Tensor up = bicubic_upsample(Tensor({2, 3, 4, 4}, 0.6), 4);
    CHECK(up.shape() == Shape{2, 3, 16, 16});
    CHECK(max_abs_diff(up, Tensor({2, 3, 16, 16}, 0.6)) < 1e-12);
}

TEST_CASE("soan pretraining lowers the loss; zero epochs changes nothing") {
    SceneConfig sc;
    sc.size = 32;
    sc.max_disp = 6;
    const auto data = synth_stereo_dataset(8, 3, sc);
    Restorer r;
    const auto before = r.store.checksum();
    SoanTrainOptions opt;
    opt.epochs = 0;
    CHECK(soan_pretrain(r.soan, r.store, data, opt).epoch_losses.empty());
    CHECK(r.store.checksum() == before);
    opt.epochs = 4;
    opt.batch = 4;
    const TrainHistory h = soan_pretrain(r.soan, r.store, data, opt);
    CHECK(h.epoch_losses.back() < h.epoch_losses.front());
    CHECK_THROWS(soan_pretrain(r.soan, r.store, {}, opt));

    Restorer adv;
    opt.loss = SoanLoss::adversarial;
    opt.epochs = 2;
    const TrainHistory ha = soan_pretrain(adv.soan, adv.store, data, opt);
    CHECK(ha.epoch_losses.size() == 2);
    for (const auto& e : adv.store.entries()) CHECK(e.first.rfind("soan.", 0) == 0);
}

TEST_CASE("control branch starts as an exact zero contribution") {
    nn::ParamStore store;
    Rng rng(5);
    const DualUNetConfig uc = small_unet();
    DualUNet unet(uc, store, rng);
    DualControlNet ctl(uc, 4, store, rng);
    ctl.init_from_unet(store, store, "unet");
    const ag::Var zl = ag::constant(random_tensor({1, 4, 8, 8}, 6)), zr = ag::constant(random_tensor({1, 4, 8, 8}, 7));
    const ag::Var img = ag::constant(random_tensor({2, 3, 32, 32}, 8, 0.0, 1.0));
    const PromptBundle p = prompts(1);
    const auto feats = ctl.forward(zl, zr, img, {12}, p);
    const auto shapes = unet.control_shapes(2, 8, 8);
    REQUIRE(feats.size() == shapes.size());
    for (std::size_t i = 0; i < feats.size(); ++i) {
        CHECK(feats[i].shape() == shapes[i]);
        CHECK(feats[i].value().max_abs() == 0.0);
    }
    const auto [al, ar] = unet.forward(zl, zr, {12}, p);
    const auto [bl, br] = unet.forward(zl, zr, {12}, p, &feats);
    CHECK(max_abs_diff(al.value(), bl.value()) == 0.0);
    CHECK(max_abs_diff(ar.value(), br.value()) == 0.0);
}

TEST_CASE("control encoder is initialized as a copy of the UNet encoder") {
    nn::ParamStore store;
    Rng rng(9);
    const DualUNetConfig uc = small_unet();
    DualUNet unet(uc, store, rng);
    DualControlNet ctl(uc, 4, store, rng);
    ctl.init_from_unet(store, store, "unet");
    int copied = 0;
    for (const auto& [name, var] : store.with_prefix("control.")) {
        const std::string twin = "unet." + name.substr(8);
        if (!store.contains(twin)) continue;
        CHECK(max_abs_diff(var.value(), store.get(twin).value()) == 0.0);
        ++copied;
    }
    CHECK(copied > 10);
    CHECK(store.get("control.zero.0.weight").value().max_abs() == 0.0);
}

TEST_CASE("control embedding maps image size to latent size") {
    nn::ParamStore store;
    Rng rng(3);
    for (int f : {1, 2, 4}) {
        ControlEmbed e(f, 8, store, rng, "e" + std::to_string(f));
        const ag::Var out = e(ag::constant(random_tensor({2, 3, 16, 16}, 4)));
        CHECK(out.shape() == Shape{2, 8, 16 / f, 16 / f});
    }
    CHECK_THROWS(ControlEmbed(3, 8, store, rng, "bad"));
}
