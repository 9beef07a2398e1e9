#include <doctest.h>

#include <cmath>

#include "sdsr/degradation.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::random_tensor;

TEST_CASE("resize is the identity at equal size and preserves constants") {
    const Tensor img = random_tensor({3, 9, 7}, 1, 0.0, 1.0);
    for (Interp i : {Interp::nearest, Interp::bilinear, Interp::bicubic, Interp::area}) {
        CHECK(max_abs_diff(resize(img, 9, 7, i), img) == 0.0);
        const Tensor flat({3, 16, 16}, 0.37);
        CHECK(resize(flat, 4, 4, i).shape() == Shape{3, 4, 4});
        CHECK(max_abs_diff(resize(flat, 4, 4, i), Tensor({3, 4, 4}, 0.37)) < 1e-12);
        CHECK(max_abs_diff(resize(flat, 40, 24, i), Tensor({3, 40, 24}, 0.37)) < 1e-12);
        CHECK(interp_from_string(to_string(i)) == i);
    }
    CHECK_THROWS(interp_from_string("lanczos"));
}

TEST_CASE("area downscale by two averages 2x2 blocks") {
    Tensor img({1, 2, 2}, std::vector<double>{0.0, 1.0, 0.5, 0.5});
    CHECK(resize(img, 1, 1, Interp::area)[0] == doctest::Approx(0.5));
}

TEST_CASE("gaussian kernel is normalized, symmetric and rotates") {
    const Tensor k = gaussian_kernel(7, 1.0, 1.0, 0.0);
    CHECK(k.sum() == doctest::Approx(1.0));
    CHECK(k[0] == doctest::Approx(k[48]));
    const Tensor a = gaussian_kernel(7, 2.0, 0.5, 0.0);
    const Tensor b = gaussian_kernel(7, 2.0, 0.5, std::numbers::pi / 2);
    // Wide along x becomes wide along y after a quarter turn.
    CHECK(a.at(0, 0, 3, 0) > a.at(0, 0, 0, 3));
    CHECK(b.at(0, 0, 0, 3) > b.at(0, 0, 3, 0));
}

TEST_CASE("filtering with a delta kernel is exact and blur keeps the mean") {
    Tensor delta({5, 5});
    delta[12] = 1.0;
    const Tensor img = random_tensor({3, 12, 10}, 2, 0.0, 1.0);
    CHECK(max_abs_diff(filter2d(img, delta), img) == 0.0);
    const Tensor blurred = filter2d(img, gaussian_kernel(5, 1.0, 1.0, 0.0));
    CHECK(std::abs(blurred.mean() - img.mean()) < 0.02);
}

TEST_CASE("dct quantization: strength zero is the identity, constants survive") {
    const Tensor img = random_tensor({3, 13, 11}, 3, 0.0, 1.0);
    CHECK(max_abs_diff(dct_quantize(img, 0.0), img) < 1e-12);
    const Tensor q = dct_quantize(img, 0.05);
    CHECK(max_abs_diff(q, img) > 1e-4);
    CHECK(max_abs_diff(dct_quantize(Tensor({1, 8, 8}, 0.25), 0.03), Tensor({1, 8, 8}, 0.25)) < 0.03 * 8);
}

TEST_CASE("degradation parameters are seeded and serialize losslessly") {
    DegradationConfig cfg;
    cfg.second_prob = 1.0;
    const DegradationParams a = sample_degradation(9, cfg), b = sample_degradation(9, cfg);
    CHECK(a == b);
    CHECK(a.second_enabled);
    CHECK(DegradationParams::from_json(a.to_json()) == a);
    CHECK_FALSE(sample_degradation(10, cfg) == a);
    DegradationConfig bad;
    bad.sigma = {2.0, 1.0};
    CHECK_THROWS(bad.validate());
}

TEST_CASE("stereo-consistent degradation: identical views stay identical without per-view noise") {
    const Tensor img = random_tensor({3, 32, 32}, 4, 0.0, 1.0);
    DegradationConfig cfg;
    cfg.noise = {0.01, 0.02};
    cfg.per_view_noise = false;
    const DegradationParams p = sample_degradation(3, cfg);
    const StereoImagePair lr = degrade_pair({img, img}, p);
    CHECK(lr.left.shape() == Shape{3, 8, 8});
    CHECK(max_abs_diff(lr.left, lr.right) == 0.0);
    cfg.per_view_noise = true;
    const StereoImagePair lr2 = degrade_pair({img, img}, sample_degradation(3, cfg));
    CHECK(max_abs_diff(lr2.left, lr2.right) > 0.0);
    for (double v : lr2.left.vec()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("rendered scenes are deterministic and tagged consistently") {
    SceneConfig sc;
    const StereoSample a = render_scene(42, sc), b = render_scene(42, sc);
    CHECK(max_abs_diff(a.hr.left, b.hr.left) == 0.0);
    CHECK(max_abs_diff(a.lr.right, b.lr.right) == 0.0);
    CHECK(a.tags == b.tags);
    CHECK(a.hr.left.shape() == Shape{3, 64, 64});
    CHECK(a.lr.left.shape() == Shape{3, 16, 16});
    CHECK(std::is_sorted(a.tags.begin(), a.tags.end()));
    int count_tags = 0, disp_tags = 0;
    for (int t : a.tags) {
        count_tags += t >= 27 && t <= 29;
        disp_tags += t >= 30;
    }
    CHECK(count_tags == 1);
    CHECK(disp_tags == 1);
}

TEST_CASE("valid ground-truth disparities map left pixels onto identical right pixels") {
    SceneConfig sc;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const StereoSample s = render_scene(seed, sc);
        int checked = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                if (!s.disparity.ok(y, x)) continue;
                const int d = static_cast<int>(s.disparity.at(y, x));
                for (int c = 0; c < 3; ++c) CHECK(s.hr.left.at(0, c, y, x) == s.hr.right.at(0, c, y, x - d));
                ++checked;
            }
        CHECK(checked > 0);
    }
}

TEST_CASE("dataset generation validates configs and assigns ids") {
    SceneConfig sc;
    const auto data = synth_stereo_dataset(5, 7, sc);
    for (int i = 0; i < 5; ++i) CHECK(data[static_cast<std::size_t>(i)].id == i);
    sc.max_disp = 40;
    CHECK_THROWS_AS(synth_stereo_dataset(2, 7, sc), RangeError);
    CHECK_THROWS_AS(synth_stereo_dataset(0, 7, SceneConfig{}), RangeError);
}
