#include <doctest.h>

#include <cmath>

#include "sdsr/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sdsr;
using namespace sdsr::testing;

TEST_CASE("mse and psnr match direct formulas") {
    const Tensor a = random_tensor({3, 5, 7}, 1, 0.0, 1.0), b = random_tensor({3, 5, 7}, 2, 0.0, 1.0);
    CHECK(std::abs(mse(a, b) - brute_mse(a, b)) < 1e-12);
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / brute_mse(a, b))));
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK_THROWS_AS(mse(a, Tensor({3, 5, 6})), ShapeError);
}

TEST_CASE("ssim matches a brute-force window loop and is exactly one on identical inputs") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const Tensor a = random_tensor({3, 16, 13}, seed, 0.0, 1.0), b = random_tensor({3, 16, 13}, seed + 10, 0.0, 1.0);
        CHECK(std::abs(ssim(a, b) - brute_ssim(a, b, {})) < 1e-6);
        CHECK(ssim(a, a) == 1.0);
    }
    CHECK_THROWS_AS(ssim(Tensor({3, 4, 4}), Tensor({3, 4, 4})), ShapeError);
}

TEST_CASE("ssim of a rendered scene with itself is exactly one") {
    const StereoSample s = render_scene(3, SceneConfig{});
    CHECK(ssim(s.hr.left, s.hr.left) == 1.0);
    CHECK(ssim(s.lr.right, s.lr.right, {4}) == 1.0);
}

TEST_CASE("block matching equals the brute-force argmin exactly") {
    const BlockMatchOptions o{5, 5};
    for (std::uint64_t seed : {6u, 7u, 8u}) {
        const Tensor l = dyadic_gray(16, 16, seed);
        const Tensor r = shift_left(l, 2, seed + 100);
        const DisparityMap fast = estimate_disparity(l, r, o), slow = brute_disparity(l, r, o);
        CHECK(fast.values == slow.values);
        CHECK(fast.valid == slow.valid);
    }
}

TEST_CASE("block matching recovers a constant shift and obeys the validity window") {
    const BlockMatchOptions o{6, 5};
    const Tensor l = dyadic_gray(20, 32, 9);
    const DisparityMap d = estimate_disparity(l, shift_left(l, 3, 10), o);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 32; ++x) {
            const bool inside = y >= 2 && y < 18 && x >= 2 + 6 && x < 30;
            CHECK(d.ok(y, x) == inside);
            if (inside) CHECK(d.at(y, x) == 3.0f);
        }
    CHECK_THROWS_AS(estimate_disparity(Tensor({3, 8, 8}), Tensor({3, 8, 8}), o), ShapeError);
}

TEST_CASE("ties resolve to the smaller disparity") {
    const Tensor flat({3, 12, 20}, 0.5);
    const DisparityMap d = estimate_disparity(flat, flat, {4, 3});
    for (std::size_t i = 0; i < d.values.size(); ++i)
        if (d.valid[i]) CHECK(d.values[i] == 0.0f);
}

TEST_CASE("a shared intensity offset leaves disparity and MADE unchanged") {
    const BlockMatchOptions o{6, 5};
    const Tensor l = dyadic_gray(20, 32, 11, 180), r = shift_left(l, 2, 12);
    Tensor l2 = l, r2 = r;
    for (double& v : l2.vec()) v += 0.1015625;  // 26/256, exact
    for (double& v : r2.vec()) v += 0.1015625;
    CHECK(estimate_disparity(l, r, o).values == estimate_disparity(l2, r2, o).values);
    const StereoImagePair gt{l, shift_left(l, 3, 13)};
    const StereoImagePair sr{l, r}, sr2{l2, r2};
    CHECK(made(sr, gt, o) == made(sr2, gt, o));
}

TEST_CASE("MADE is zero on identical pairs and one for a one-pixel disparity error") {
    const BlockMatchOptions o{8, 5};
    const Tensor l = dyadic_gray(24, 40, 14);
    const StereoImagePair gt{l, shift_left(l, 4, 15)};
    CHECK(made(gt, gt, o) == 0.0);
    const StereoImagePair off{l, shift_left(l, 5, 15)};
    CHECK(made(off, gt, o) == 1.0);
    CHECK(made(gt, off, o) == 1.0);
}

TEST_CASE("made on maps uses the intersection of valid masks") {
    DisparityMap a, b;
    a.height = b.height = 1;
    a.width = b.width = 3;
    a.values = {1, 2, 3};
    b.values = {1, 0, 0};
    a.valid = {1, 1, 0};
    b.valid = {1, 0, 1};
    CHECK(made(a, b) == 0.0);
    b.valid = {0, 0, 1};
    CHECK_THROWS(made(a, b));
    b.valid = {1, 1, 1};
    CHECK(made(a, b) == 1.0);
    CHECK(disparity_accuracy(a, b, 0.5) == 0.5);
}
