#include <doctest.h>

#include "sdsr/latent_codec.hpp"
#include "sdsr/metrics.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::random_tensor;

namespace {

struct Codec {
    nn::ParamStore store;
    Rng rng;
    LatentCodec codec;
    explicit Codec(CodecConfig cfg = {}, std::uint64_t seed = 1) : rng(seed), codec(cfg, store, rng) {}
};

}  // namespace

TEST_CASE("codec shapes follow the factor and channel count") {
    CodecConfig cfg;
    cfg.width = 8;
    Codec c(cfg);
    const Tensor img = random_tensor({3, 32, 32}, 2, 0.0, 1.0);
    const Tensor z = c.codec.encode(img);
    CHECK(z.shape() == Shape{4, 8, 8});
    CHECK(c.codec.latent_shape(32, 32) == Shape{4, 8, 8});
    CHECK(c.codec.decode(z).shape() == Shape{3, 32, 32});
    CHECK_THROWS_AS(c.codec.encode(random_tensor({3, 30, 32}, 2)), ShapeError);
}

TEST_CASE("bypass codec is the identity") {
    CodecConfig cfg;
    cfg.bypass = true;
    Codec c(cfg);
    const Tensor img = random_tensor({3, 16, 16}, 3, 0.0, 1.0);
    CHECK(c.codec.factor() == 1);
    CHECK(c.codec.channels() == 3);
    CHECK(max_abs_diff(c.codec.decode(c.codec.encode(img)), img) == 0.0);
}

TEST_CASE("latent scale is calibrated to unit spread and cancels on decode") {
    CodecConfig cfg;
    cfg.width = 8;
    Codec c(cfg);
    std::vector<Tensor> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(random_tensor({3, 16, 16}, 10 + i, 0.0, 1.0));
    const Tensor before = c.codec.decode(c.codec.encode(imgs[0]));
    c.codec.calibrate_scale(imgs);
    double s2 = 0.0, m = 0.0;
    std::size_t n = 0;
    for (const auto& im : imgs) {
        const Tensor z = c.codec.encode(im);
        for (double v : z.vec()) m += v, s2 += v * v, ++n;
    }
    m /= static_cast<double>(n);
    CHECK(s2 / static_cast<double>(n) - m * m == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(max_abs_diff(c.codec.decode(c.codec.encode(imgs[0])), before) < 1e-9);
    CHECK_FALSE(c.store.get("codec.latent_scale").requires_grad());
}

TEST_CASE("codec pretraining reduces reconstruction error") {
    SceneConfig sc;
    sc.size = 32;
    sc.max_disp = 6;
    const auto data = synth_stereo_dataset(8, 5, sc);
    CodecConfig cfg;
    cfg.width = 8;
    Codec c(cfg);
    CodecTrainOptions opt;
    opt.epochs = 5;
    opt.batch = 4;
    const TrainHistory h = pretrain_codec(c.codec, c.store, data, opt);
    REQUIRE(h.epoch_losses.size() == 5);
    CHECK(h.epoch_losses.back() < h.epoch_losses.front());
}
