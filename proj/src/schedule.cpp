#include "sdsr/schedule.hpp"

#include <cmath>
#include <string>

namespace sdsr {

NoiseSchedule NoiseSchedule::from_alpha_bars(std::vector<double> alpha_bars) {
    NoiseSchedule s;
    s.T = static_cast<int>(alpha_bars.size());
    double prev = 1.0;
    for (double ab : alpha_bars) {
        const double a = prev > 0.0 ? ab / prev : 0.0;
        s.alphas.push_back(a);
        s.betas.push_back(1.0 - a);
        prev = ab;
    }
    s.alpha_bars = std::move(alpha_bars);
    return s;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == -1) return 1.0;
    if (t < 0 || t >= T) throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
    return alpha_bars[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    if (T < 2) throw RangeError("schedule needs T >= 2");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw RangeError("schedule needs 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    double cum = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta = beta_min + (beta_max - beta_min) * t / (T - 1);
        s.betas.push_back(beta);
        s.alphas.push_back(1.0 - beta);
        cum *= 1.0 - beta;
        s.alpha_bars.push_back(cum);
    }
    return s;
}

NoiseDraw draw_noise(const Shape& shape, std::uint64_t seed, bool shared) {
    NoiseDraw d;
    d.seed = seed;
    d.shared = shared;
    Rng rng = make_rng(seed, 0x6e6f697365);
    d.left = Tensor::randn(shape, rng);
    if (shared) {
        d.right = d.left;
    } else {
        Rng rng_r = make_rng(seed, 0x6e6f697365, 1);
        d.right = Tensor::randn(shape, rng_r);
    }
    return d;
}

namespace {

void check_pair(const LatentPair& p, const char* what) {
    require_same_shape(p.left, p.right, what);
}

Tensor noised(const Tensor& z, const Tensor& eps, const std::vector<int>& t, const NoiseSchedule& sched) {
    require_same_shape(z, eps, "add_noise");
    Tensor out(z.shape());
    const std::size_t items = t.size();
    const std::size_t per = z.numel() / items;
    for (std::size_t b = 0; b < items; ++b) {
        const int tb = t[b];
        if (tb < 0 || tb >= sched.T) throw RangeError("add_noise: timestep out of range");
        const double ab = sched.alpha_bars[static_cast<std::size_t>(tb)];
        const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = sa * z[i] + sn * eps[i];
    }
    return out;
}

}  // namespace

LatentPair add_noise(const LatentPair& pair, int t, const NoiseDraw& noise, const NoiseSchedule& sched) {
    return add_noise(pair, std::vector<int>{t}, noise, sched);
}

LatentPair add_noise(const LatentPair& pair, const std::vector<int>& t, const NoiseDraw& noise,
                     const NoiseSchedule& sched) {
    check_pair(pair, "add_noise");
    if (t.empty() || pair.left.numel() % t.size() != 0) throw ShapeError("add_noise: timestep count does not divide batch");
    return {noised(pair.left, noise.left, t, sched), noised(pair.right, noise.right, t, sched)};
}

double diffusion_loss(const LatentPair& eps_pred, const NoiseDraw& noise) {
    require_same_shape(eps_pred.left, noise.left, "diffusion_loss");
    require_same_shape(eps_pred.right, noise.right, "diffusion_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < noise.left.numel(); ++i) {
        const double dl = eps_pred.left[i] - noise.left[i];
        const double dr = eps_pred.right[i] - noise.right[i];
        s += dl * dl + dr * dr;
    }
    return s / static_cast<double>(2 * noise.left.numel());
}

ag::Var diffusion_loss(const ag::Var& pred_left, const ag::Var& pred_right, const NoiseDraw& noise) {
    ag::Var both = ag::concat({pred_left, pred_right}, 0);
    ag::Var target = ag::constant(Tensor::concat0({noise.left, noise.right}));
    return ag::mse(both, target);
}

LatentPair ddim_step(const LatentPair& z_t, const LatentPair& eps_pred, int t, int t_prev,
                     const NoiseSchedule& sched) {
    check_pair(z_t, "ddim_step");
    require_same_shape(z_t.left, eps_pred.left, "ddim_step");
    require_same_shape(z_t.right, eps_pred.right, "ddim_step");
    if (!(t_prev < t)) throw RangeError("ddim_step requires t_prev < t");
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t_prev);
    const double s_ab = std::sqrt(ab), s_nab = std::sqrt(1.0 - ab);
    const double s_prev = std::sqrt(ab_prev), s_nprev = std::sqrt(1.0 - ab_prev);
    auto step = [&](const Tensor& z, const Tensor& e) {
        Tensor out(z.shape());
        for (std::size_t i = 0; i < z.numel(); ++i) {
            const double x0 = (z[i] - s_nab * e[i]) / s_ab;
            out[i] = s_prev * x0 + s_nprev * e[i];
        }
        return out;
    };
    return {step(z_t.left, eps_pred.left), step(z_t.right, eps_pred.right)};
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw RangeError("ddim steps must lie in [1, T]");
    return ddim_timesteps(T, steps, T - 1);
}

std::vector<int> ddim_timesteps(int T, int steps, int start) {
    if (start < 0 || start >= T) throw RangeError("ddim start must lie in [0, T)");
    if (steps < 1 || steps > start + 1) throw RangeError("ddim steps must lie in [1, start + 1]");
    std::vector<int> ts;
    if (steps == 1) return {start};
    for (int i = 0; i < steps; ++i) {
        const double pos = static_cast<double>(start) * (steps - 1 - i) / (steps - 1);
        ts.push_back(static_cast<int>(std::lround(pos)));
    }
    return ts;
}

LatentPair initial_latents(const Shape& shape, std::uint64_t seed, bool shared_noise) {
    NoiseDraw d = draw_noise(shape, derive_seed(seed, 0x7a54), shared_noise);
    return {std::move(d.left), std::move(d.right)};
}

LatentPair ddim_sample(const Denoiser& model, const Shape& latent_shape, int steps, std::uint64_t seed,
                       const NoiseSchedule& sched, bool shared_noise) {
    const std::vector<int> ts = ddim_timesteps(sched.T, steps);
    LatentPair z = initial_latents(latent_shape, seed, shared_noise);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        LatentPair eps = model(z, t);
        z = ddim_step(z, eps, t, t_prev, sched);
    }
    return z;
}

}  // namespace sdsr
