#include <doctest.h>

#include <cmath>

#include "sdsr/dual_unet.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::grad_check;
using sdsr::testing::random_tensor;

namespace {

DualUNetConfig small_config(bool fusion = true) {
    DualUNetConfig c;
    c.latent_channels = 3;
    c.base_channels = 8;
    c.channel_mults = {1, 2};
    c.attn_levels = {1};
    c.tascata_levels = fusion ? std::vector<int>{0, 1} : std::vector<int>{};
    c.time_dim = 8;
    c.context_dim = 6;
    c.T = 100;
    return c;
}

PromptBundle random_prompts(int b, std::uint64_t seed, int hard_len = 2) {
    PromptBundle p;
    p.soft_left = random_tensor({b, 4, 6}, seed);
    p.soft_right = random_tensor({b, 4, 6}, seed + 1);
    p.hard_left = random_tensor({b, 3, 6}, seed + 2);
    p.hard_right = p.hard_left;
    p.hard_len_left.assign(static_cast<std::size_t>(b), hard_len);
    p.hard_len_right = p.hard_len_left;
    return p;
}

struct Net {
    nn::ParamStore store;
    Rng rng;
    DualUNet unet;
    explicit Net(DualUNetConfig cfg = small_config(), std::uint64_t seed = 1) : rng(seed), unet(cfg, store, rng) {}
};

}  // namespace

TEST_CASE("sinusoid embedding interleaves sin and cos") {
    const Tensor e = sinusoid({0, 3}, 8);
    CHECK(e.shape() == Shape{2, 8});
    for (int i = 0; i < 4; ++i) {
        CHECK(e[2 * i] == 0.0);
        CHECK(e[2 * i + 1] == 1.0);
        const double f = std::exp(-std::log(10000.0) * i / 4.0);
        CHECK(e[8 + 2 * i] == doctest::Approx(std::sin(3 * f)));
        CHECK(e[8 + 2 * i + 1] == doctest::Approx(std::cos(3 * f)));
    }
}

TEST_CASE("forward preserves latent shape and validates timesteps") {
    Net n;
    const ag::Var zl = ag::constant(random_tensor({2, 3, 8, 8}, 2)), zr = ag::constant(random_tensor({2, 3, 8, 8}, 3));
    const auto [l, r] = n.unet.forward(zl, zr, {5, 60}, random_prompts(2, 4));
    CHECK(l.shape() == zl.shape());
    CHECK(r.shape() == zr.shape());
    CHECK_THROWS_AS(n.unet.time_embed({100}), RangeError);
    CHECK_THROWS_AS(n.unet.time_embed({-1}), RangeError);
    CHECK_THROWS_AS(n.unet.forward(zl, ag::constant(random_tensor({2, 3, 8, 4}, 3)), {5, 6}, random_prompts(2, 4)),
                    ShapeError);
}

TEST_CASE("swapping views at init swaps the outputs") {
    Net n;
    const ag::Var zl = ag::constant(random_tensor({1, 3, 8, 8}, 5)), zr = ag::constant(random_tensor({1, 3, 8, 8}, 6));
    const PromptBundle p = random_prompts(1, 7);
    ag::NoGradGuard g;
    const auto [al, ar] = n.unet.forward(zl, zr, {40}, p);
    const auto [bl, br] = n.unet.forward(zr, zl, {40}, p.swapped());
    CHECK(max_abs_diff(al.value(), br.value()) == 0.0);
    CHECK(max_abs_diff(ar.value(), bl.value()) == 0.0);
}

TEST_CASE("items in a batch are independent") {
    Net n;
    const Tensor zl = random_tensor({2, 3, 8, 8}, 8), zr = random_tensor({2, 3, 8, 8}, 9);
    PromptBundle p = random_prompts(2, 10);
    p.hard_len_left = p.hard_len_right = {1, 3};
    ag::NoGradGuard g;
    const auto [bl, br] = n.unet.forward(ag::constant(zl), ag::constant(zr), {3, 70}, p);
    for (int i = 0; i < 2; ++i) {
        PromptBundle pi;
        pi.soft_left = p.soft_left.slice0(i, 1);
        pi.soft_right = p.soft_right.slice0(i, 1);
        pi.hard_left = p.hard_left.slice0(i, 1);
        pi.hard_right = p.hard_right.slice0(i, 1);
        pi.hard_len_left = pi.hard_len_right = {p.hard_len_left[static_cast<std::size_t>(i)]};
        const auto [l, r] = n.unet.forward(ag::constant(zl.slice0(i, 1)), ag::constant(zr.slice0(i, 1)),
                                           {i == 0 ? 3 : 70}, pi);
        CHECK(max_abs_diff(l.value(), bl.value().slice0(i, 1)) < 1e-12);
        CHECK(max_abs_diff(r.value(), br.value().slice0(i, 1)) < 1e-12);
    }
}

TEST_CASE("without fusion the pair forward equals two single-view passes") {
    Net n(small_config(false));
    CHECK_FALSE(n.unet.fusion_enabled());
    for (const auto& e : n.store.entries()) CHECK(e.first.find(".tascata.") == std::string::npos);
    const Tensor zl = random_tensor({1, 3, 8, 8}, 11), zr = random_tensor({1, 3, 8, 8}, 12);
    const PromptBundle p = random_prompts(1, 13);
    ag::NoGradGuard g;
    const auto [l, r] = n.unet.forward(ag::constant(zl), ag::constant(zr), {9}, p);
    const auto vl = n.unet.forward_view(ag::constant(zl), {9}, p.soft_left, p.hard_left, p.hard_len_left);
    const auto vr = n.unet.forward_view(ag::constant(zr), {9}, p.soft_right, p.hard_right, p.hard_len_right);
    CHECK(max_abs_diff(l.value(), vl.value()) < 1e-12);
    CHECK(max_abs_diff(r.value(), vr.value()) < 1e-12);
    Net fused;
    CHECK_THROWS(fused.unet.forward_view(ag::constant(zl), {9}, p.soft_left, p.hard_left, p.hard_len_left));
}

TEST_CASE("zero control features leave the prediction unchanged") {
    Net n;
    const ag::Var zl = ag::constant(random_tensor({1, 3, 8, 8}, 14)), zr = ag::constant(random_tensor({1, 3, 8, 8}, 15));
    const PromptBundle p = random_prompts(1, 16);
    std::vector<ag::Var> zeros;
    for (const Shape& s : n.unet.control_shapes(2, 8, 8)) zeros.push_back(ag::constant(Tensor(s)));
    ag::NoGradGuard g;
    const auto [al, ar] = n.unet.forward(zl, zr, {20}, p);
    const auto [bl, br] = n.unet.forward(zl, zr, {20}, p, &zeros);
    CHECK(max_abs_diff(al.value(), bl.value()) == 0.0);
    CHECK(max_abs_diff(ar.value(), br.value()) == 0.0);
    std::vector<ag::Var> wrong{ag::constant(Tensor({2, 1, 8, 8}))};
    CHECK_THROWS_AS(n.unet.forward(zl, zr, {20}, p, &wrong), ShapeError);
}

TEST_CASE("full-network gradient spot check on sampled weights") {
    Net n;
    // Nonzero gains so the fusion path contributes.
    for (const auto& e : n.store.entries())
        if (e.first.find("gamma") != std::string::npos) ag::Var(e.second).mutable_value()[0] = 0.5;
    const ag::Var zl = ag::constant(random_tensor({1, 3, 4, 4}, 17)), zr = ag::constant(random_tensor({1, 3, 4, 4}, 18));
    const PromptBundle p = random_prompts(1, 19);
    const NoiseDraw noise = draw_noise({1, 3, 4, 4}, 20, false);
    auto loss = [&] {
        const auto [l, r] = n.unet.forward(zl, zr, {30}, p);
        return diffusion_loss(l, r, noise);
    };
    std::vector<ag::Var> picks;
    for (const char* name : {"unet.conv_in.weight", "unet.down.0.tascata.w1_left.weight", "unet.mid.block1.conv.weight",
                             "unet.up.1.attn.k.weight", "unet.conv_out.weight"})
        picks.push_back(n.store.get(name));
    CHECK(grad_check(loss, picks, 3, 1e-5, 1e-8) < 1e-3);
}
