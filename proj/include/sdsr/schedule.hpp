#pragma once

// Noise schedule, forward noising, the noise-prediction loss and deterministic
// DDIM sampling. Everything here is a pure function of its arguments.

#include <cstdint>
#include <functional>
#include <vector>

#include "sdsr/autograd.hpp"
#include "sdsr/tensor.hpp"

namespace sdsr {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    /// Builds a schedule directly from cumulative products (used for synthetic schedules).
    static NoiseSchedule from_alpha_bars(std::vector<double> alpha_bars);
    /// alpha_bar at step t; t == -1 denotes the clean end point (alpha_bar = 1).
    double alpha_bar(int t) const;
};

/// Linear beta schedule; throws RangeError unless T >= 2 and 0 < beta_min <= beta_max < 1.
NoiseSchedule make_schedule(int T = 1000, double beta_min = 1e-4, double beta_max = 0.02);

/// Left/right latents; each tensor is [N,C,h,w] (or [C,h,w]) and both share a shape.
struct LatentPair {
    Tensor left;
    Tensor right;
};

/// Standard-normal noise for both views. With shared noise the two tensors are identical.
struct NoiseDraw {
    Tensor left;
    Tensor right;
    std::uint64_t seed = 0;
    bool shared = true;
};

NoiseDraw draw_noise(const Shape& shape, std::uint64_t seed, bool shared = true);

/// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps, per view. t may be a single step or one per batch item.
LatentPair add_noise(const LatentPair& pair, int t, const NoiseDraw& noise, const NoiseSchedule& sched);
LatentPair add_noise(const LatentPair& pair, const std::vector<int>& t, const NoiseDraw& noise,
                     const NoiseSchedule& sched);

/// Mean squared error over every element of both views.
double diffusion_loss(const LatentPair& eps_pred, const NoiseDraw& noise);
ag::Var diffusion_loss(const ag::Var& pred_left, const ag::Var& pred_right, const NoiseDraw& noise);

/// One eta = 0 DDIM update from t to t_prev (t_prev == -1 lands on the clean sample).
LatentPair ddim_step(const LatentPair& z_t, const LatentPair& eps_pred, int t, int t_prev,
                     const NoiseSchedule& sched);

/// Evenly spaced descending steps from T-1 to 0 (just T-1 when steps == 1).
std::vector<int> ddim_timesteps(int T, int steps);

/// Same spacing but starting at `start` (0 <= start < T); needs steps <= start + 1 so steps stay distinct.
std::vector<int> ddim_timesteps(int T, int steps, int start);

/// Predicts the noise of a latent pair at step t; conditioning is bound by the caller.
using Denoiser = std::function<LatentPair(const LatentPair& z_t, int t)>;

/// Initial latent draw used by ddim_sample (exposed so tests can reconstruct it).
LatentPair initial_latents(const Shape& shape, std::uint64_t seed, bool shared_noise);

LatentPair ddim_sample(const Denoiser& model, const Shape& latent_shape, int steps, std::uint64_t seed,
                       const NoiseSchedule& sched, bool shared_noise = true);

}  // namespace sdsr
