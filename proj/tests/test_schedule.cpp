#include <doctest.h>

#include <cmath>

#include "sdsr/schedule.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::grad_check;
using sdsr::testing::random_tensor;

TEST_CASE("alpha_bar decreases strictly and stays in (0,1)") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    REQUIRE(s.alpha_bars.size() == 1000);
    CHECK(s.alpha_bar(-1) == 1.0);
    for (int t = 0; t < 1000; ++t) {
        CHECK(s.alpha_bars[t] > 0.0);
        CHECK(s.alpha_bars[t] < 1.0);
        if (t > 0) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    }
    CHECK(s.alpha_bars[0] == doctest::Approx(1.0 - 1e-4));
}

TEST_CASE("schedule validates its arguments") {
    CHECK_THROWS_AS(make_schedule(1), RangeError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), RangeError);
    CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), RangeError);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), RangeError);
    const NoiseSchedule flat = make_schedule(10, 0.01, 0.01);
    CHECK(flat.alpha_bars[9] == doctest::Approx(std::pow(0.99, 10)));
}

TEST_CASE("add_noise follows the closed form and t=0 is nearly clean") {
    const NoiseSchedule s = make_schedule();
    const LatentPair z{random_tensor({2, 4, 3, 3}, 1), random_tensor({2, 4, 3, 3}, 2)};
    const NoiseDraw n = draw_noise({2, 4, 3, 3}, 5);
    const LatentPair zt = add_noise(z, std::vector<int>{10, 700}, n, s);
    const double a0 = std::sqrt(s.alpha_bars[10]), b0 = std::sqrt(1.0 - s.alpha_bars[10]);
    const double a1 = std::sqrt(s.alpha_bars[700]), b1 = std::sqrt(1.0 - s.alpha_bars[700]);
    for (std::size_t i = 0; i < 36; ++i) CHECK(zt.left[i] == doctest::Approx(a0 * z.left[i] + b0 * n.left[i]));
    for (std::size_t i = 36; i < 72; ++i) CHECK(zt.right[i] == doctest::Approx(a1 * z.right[i] + b1 * n.right[i]));
    const LatentPair z0 = add_noise(z, 0, n, s);
    CHECK(max_abs_diff(z0.left, z.left) < 0.02 * 4);
    CHECK_THROWS_AS(add_noise(z, 1000, n, s), RangeError);
}

TEST_CASE("shared noise gives identical views, independent noise differs") {
    const NoiseDraw shared = draw_noise({1, 2, 4, 4}, 3, true);
    const NoiseDraw indep = draw_noise({1, 2, 4, 4}, 3, false);
    CHECK(max_abs_diff(shared.left, shared.right) == 0.0);
    CHECK(max_abs_diff(indep.left, indep.right) > 0.0);
    CHECK(max_abs_diff(draw_noise({1, 2, 4, 4}, 3).left, shared.left) == 0.0);
}

TEST_CASE("perfect noise prediction gives zero loss") {
    const NoiseDraw n = draw_noise({1, 4, 2, 2}, 9, false);
    CHECK(diffusion_loss(LatentPair{n.left, n.right}, n) == 0.0);
    const LatentPair off{n.left + Tensor(n.left.shape(), 1.0), n.right};
    CHECK(diffusion_loss(off, n) == doctest::Approx(0.5));
}

TEST_CASE("diffusion loss gradient matches finite differences") {
    const NoiseDraw n = draw_noise({2, 3, 2, 2}, 4, false);
    ag::Var pl(random_tensor({2, 3, 2, 2}, 5), true), pr(random_tensor({2, 3, 2, 2}, 6), true);
    CHECK(grad_check([&] { return diffusion_loss(pl, pr, n); }, {pl, pr}) < 1e-4);
}

TEST_CASE("one DDIM step with the exact noise inverts the forward process") {
    const NoiseSchedule s = make_schedule();
    const LatentPair z{random_tensor({1, 4, 4, 4}, 7), random_tensor({1, 4, 4, 4}, 8)};
    const NoiseDraw n = draw_noise({1, 4, 4, 4}, 11, false);
    for (int t : {0, 1, 10, 250, 500, 999}) {
        const LatentPair zt = add_noise(z, t, n, s);
        const LatentPair back = ddim_step(zt, {n.left, n.right}, t, -1, s);
        CHECK(max_abs_diff(back.left, z.left) < 1e-4);
        CHECK(max_abs_diff(back.right, z.right) < 1e-4);
    }
}

TEST_CASE("ddim timesteps are evenly spaced and descending") {
    const auto ts = ddim_timesteps(1000, 50);
    REQUIRE(ts.size() == 50);
    CHECK(ts.front() == 999);
    CHECK(ts.back() == 0);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    CHECK(ddim_timesteps(1000, 1) == std::vector<int>{999});
    CHECK_THROWS_AS(ddim_timesteps(10, 11), RangeError);
}

TEST_CASE("ddim timesteps from a partial start") {
    CHECK(ddim_timesteps(1000, 5, 200) == std::vector<int>{200, 150, 100, 50, 0});
    CHECK(ddim_timesteps(1000, 50, 999) == ddim_timesteps(1000, 50));
    CHECK(ddim_timesteps(1000, 1, 40) == std::vector<int>{40});
    CHECK_THROWS_AS(ddim_timesteps(1000, 5, 3), RangeError);
    CHECK_THROWS_AS(ddim_timesteps(1000, 5, 1000), RangeError);
}

TEST_CASE("ddim sampling is bit-deterministic and exact under an oracle denoiser") {
    const NoiseSchedule s = make_schedule();
    const Tensor target = random_tensor({1, 2, 3, 3}, 12);
    // Oracle: the noise implied by the current latent and the known clean sample.
    const Denoiser oracle = [&](const LatentPair& zt, int t) {
        const double ab = s.alpha_bars[static_cast<std::size_t>(t)];
        LatentPair eps{zt.left, zt.right};
        for (Tensor* e : {&eps.left, &eps.right})
            for (std::size_t i = 0; i < e->numel(); ++i)
                (*e)[i] = ((*e)[i] - std::sqrt(ab) * target[i]) / std::sqrt(1.0 - ab);
        return eps;
    };
    const LatentPair a = ddim_sample(oracle, {1, 2, 3, 3}, 50, 3, s);
    const LatentPair b = ddim_sample(oracle, {1, 2, 3, 3}, 50, 3, s);
    CHECK(checksum(a.left) == checksum(b.left));
    CHECK(checksum(a.right) == checksum(b.right));
    CHECK(max_abs_diff(a.left, target) < 1e-9);
    const LatentPair init = initial_latents({1, 2, 3, 3}, 3, true);
    CHECK(max_abs_diff(init.left, init.right) == 0.0);
}
