#include "sdsr/degradation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sdsr {

std::string to_string(Interp i) {
    switch (i) {
        case Interp::nearest: return "nearest";
        case Interp::bilinear: return "bilinear";
        case Interp::bicubic: return "bicubic";
        case Interp::area: return "area";
    }
    return "?";
}

Interp interp_from_string(const std::string& s) {
    for (Interp i : {Interp::nearest, Interp::bilinear, Interp::bicubic, Interp::area})
        if (to_string(i) == s) return i;
    throw std::invalid_argument("unknown interpolation: " + s);
}

namespace {

void require_image(const Tensor& img, const char* what) {
    if (img.ndim() != 3) throw ShapeError(std::string(what) + ": expected [C,H,W], got " + shape_str(img.shape()));
}

double cubic(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
    return 0.0;
}

struct Taps {
    std::vector<int> start;
    std::vector<std::vector<double>> weights;
};

// Contributions of input samples to each output sample along one axis.
Taps resample_taps(int in, int out, Interp interp) {
    Taps t;
    const double scale = static_cast<double>(out) / in;
    double support = 0.0;
    double (*kernel)(double) = nullptr;
    switch (interp) {
        case Interp::nearest: break;
        case Interp::bilinear:
            support = 1.0;
            kernel = [](double x) { return std::max(0.0, 1.0 - std::abs(x)); };
            break;
        case Interp::bicubic:
            support = 2.0;
            kernel = cubic;
            break;
        case Interp::area:
            support = 0.5;
            kernel = [](double x) { return std::abs(x) < 0.5 ? 1.0 : (std::abs(x) == 0.5 ? 0.5 : 0.0); };
            break;
    }
    const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
    for (int o = 0; o < out; ++o) {
        const double centre = (o + 0.5) / scale - 0.5;
        if (interp == Interp::nearest) {
            t.start.push_back(std::clamp(static_cast<int>(std::floor((o + 0.5) / scale)), 0, in - 1));
            t.weights.push_back({1.0});
            continue;
        }
        const int lo = static_cast<int>(std::floor(centre - support * stretch));
        const int hi = static_cast<int>(std::ceil(centre + support * stretch));
        std::vector<double> w;
        double total = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double v = kernel((centre - i) / stretch);
            w.push_back(v);
            total += v;
        }
        for (double& v : w) v /= total;
        t.start.push_back(lo);
        t.weights.push_back(std::move(w));
    }
    return t;
}

int clampi(int v, int n) { return std::clamp(v, 0, n - 1); }

int reflect(int v, int n) {
    if (n == 1) return 0;
    while (v < 0 || v >= n) v = v < 0 ? -v : 2 * (n - 1) - v;
    return v;
}

double uniform_in(Rng& rng, const Range& r) {
    return r.lo + (r.hi - r.lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

bool bernoulli(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

}  // namespace

Tensor resize(const Tensor& img, int out_h, int out_w, Interp interp) {
    require_image(img, "resize");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize: output size must be positive");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) return img;
    const Taps tx = resample_taps(w, out_w, interp);
    const Taps ty = resample_taps(h, out_h, interp);
    Tensor rows({c, h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                const auto& wts = tx.weights[static_cast<std::size_t>(x)];
                for (std::size_t k = 0; k < wts.size(); ++k)
                    acc += wts[k] * img.at(0, ch, y, clampi(tx.start[static_cast<std::size_t>(x)] + static_cast<int>(k), w));
                rows.at(0, ch, y, x) = acc;
            }
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y) {
            const auto& wts = ty.weights[static_cast<std::size_t>(y)];
            for (int x = 0; x < out_w; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < wts.size(); ++k)
                    acc += wts[k] * rows.at(0, ch, clampi(ty.start[static_cast<std::size_t>(y)] + static_cast<int>(k), h), x);
                out.at(0, ch, y, x) = acc;
            }
        }
    return out;
}

Tensor gaussian_kernel(int size, double sigma_x, double sigma_y, double theta) {
    if (size < 1 || size % 2 == 0) throw RangeError("gaussian_kernel: size must be odd and positive");
    if (!(sigma_x > 0.0 && sigma_y > 0.0)) throw RangeError("gaussian_kernel: sigmas must be positive");
    const int r = size / 2;
    const double ct = std::cos(theta), st = std::sin(theta);
    Tensor k({size, size});
    double total = 0.0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double u = ct * x + st * y, v = -st * x + ct * y;
            const double val = std::exp(-0.5 * (u * u / (sigma_x * sigma_x) + v * v / (sigma_y * sigma_y)));
            k[static_cast<std::size_t>((y + r) * size + x + r)] = val;
            total += val;
        }
    k *= 1.0 / total;
    return k;
}

Tensor filter2d(const Tensor& img, const Tensor& kernel) {
    require_image(img, "filter2d");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2), ks = kernel.dim(0), r = ks / 2;
    Tensor out(img.shape());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        acc += kernel[static_cast<std::size_t>((dy + r) * ks + dx + r)] *
                               img.at(0, ch, reflect(y + dy, h), reflect(x + dx, w));
                out.at(0, ch, y, x) = acc;
            }
    return out;
}

Tensor dct_quantize(const Tensor& img, double strength) {
    require_image(img, "dct_quantize");
    if (strength < 0.0) throw RangeError("dct_quantize: strength must be non-negative");
    if (strength == 0.0) return img;
    constexpr int B = 8;
    std::array<std::array<double, B>, B> basis{};
    for (int u = 0; u < B; ++u)
        for (int x = 0; x < B; ++x)
            basis[u][x] = (u == 0 ? std::sqrt(1.0 / B) : std::sqrt(2.0 / B)) *
                          std::cos((2 * x + 1) * u * std::numbers::pi / (2.0 * B));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out(img.shape());
    std::array<std::array<double, B>, B> blk{}, tmp{}, coef{};
    for (int ch = 0; ch < c; ++ch)
        for (int by = 0; by < h; by += B)
            for (int bx = 0; bx < w; bx += B) {
                for (int y = 0; y < B; ++y)
                    for (int x = 0; x < B; ++x) blk[y][x] = img.at(0, ch, std::min(by + y, h - 1), std::min(bx + x, w - 1));
                for (int v = 0; v < B; ++v)
                    for (int x = 0; x < B; ++x) {
                        double a = 0.0;
                        for (int y = 0; y < B; ++y) a += basis[v][y] * blk[y][x];
                        tmp[v][x] = a;
                    }
                for (int v = 0; v < B; ++v)
                    for (int u = 0; u < B; ++u) {
                        double a = 0.0;
                        for (int x = 0; x < B; ++x) a += basis[u][x] * tmp[v][x];
                        const double step = strength * (1 + u + v);
                        coef[v][u] = std::round(a / step) * step;
                    }
                for (int y = 0; y < B; ++y)
                    for (int u = 0; u < B; ++u) {
                        double a = 0.0;
                        for (int v = 0; v < B; ++v) a += basis[v][y] * coef[v][u];
                        tmp[y][u] = a;
                    }
                for (int y = 0; y < B && by + y < h; ++y)
                    for (int x = 0; x < B && bx + x < w; ++x) {
                        double a = 0.0;
                        for (int u = 0; u < B; ++u) a += basis[u][x] * tmp[y][u];
                        out.at(0, ch, by + y, bx + x) = a;
                    }
            }
    return out;
}

namespace {

nlohmann::json stage_json(const DegradationStage& s) {
    return {{"blur", s.blur},           {"kernel_size", s.kernel_size},   {"sigma_x", s.sigma_x},
            {"sigma_y", s.sigma_y},     {"theta", s.theta},               {"resize_factor", s.resize_factor},
            {"interp", to_string(s.interp)}, {"noise_sigma", s.noise_sigma}, {"compress", s.compress}};
}

DegradationStage stage_from_json(const nlohmann::json& j) {
    DegradationStage s;
    s.blur = j.at("blur");
    s.kernel_size = j.at("kernel_size");
    s.sigma_x = j.at("sigma_x");
    s.sigma_y = j.at("sigma_y");
    s.theta = j.at("theta");
    s.resize_factor = j.at("resize_factor");
    s.interp = interp_from_string(j.at("interp"));
    s.noise_sigma = j.at("noise_sigma");
    s.compress = j.at("compress");
    return s;
}

DegradationStage sample_stage(Rng& rng, const DegradationConfig& cfg) {
    DegradationStage s;
    s.kernel_size = cfg.kernel_size;
    s.blur = bernoulli(rng, cfg.blur_prob);
    const double sx = uniform_in(rng, cfg.sigma);
    const bool aniso = bernoulli(rng, cfg.aniso_prob);
    const double sy = aniso ? uniform_in(rng, cfg.sigma) : sx;
    const double theta = aniso ? std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng) : 0.0;
    if (s.blur) {
        s.sigma_x = sx;
        s.sigma_y = sy;
        s.theta = theta;
    }
    s.resize_factor = uniform_in(rng, cfg.resize);
    s.interp = cfg.interps[std::uniform_int_distribution<std::size_t>(0, cfg.interps.size() - 1)(rng)];
    s.noise_sigma = uniform_in(rng, cfg.noise);
    s.compress = uniform_in(rng, cfg.compress);
    return s;
}

Tensor apply_stage(const Tensor& img, const DegradationStage& s, Rng& noise_rng) {
    Tensor x = img;
    if (s.blur) x = filter2d(x, gaussian_kernel(s.kernel_size, s.sigma_x, s.sigma_y, s.theta));
    if (s.resize_factor != 1.0) {
        const int h = std::max(1, static_cast<int>(std::lround(x.dim(1) * s.resize_factor)));
        const int w = std::max(1, static_cast<int>(std::lround(x.dim(2) * s.resize_factor)));
        x = resize(x, h, w, s.interp);
    }
    if (s.noise_sigma > 0.0) {
        std::normal_distribution<double> n(0.0, s.noise_sigma);
        for (double& v : x.vec()) v += n(noise_rng);
    }
    for (double& v : x.vec()) v = std::clamp(v, 0.0, 1.0);
    if (s.compress > 0.0) {
        x = dct_quantize(x, s.compress);
        for (double& v : x.vec()) v = std::clamp(v, 0.0, 1.0);
    }
    return x;
}

}  // namespace

nlohmann::json DegradationParams::to_json() const {
    return {{"first", stage_json(first)},
            {"second_enabled", second_enabled},
            {"second", stage_json(second)},
            {"out_scale", out_scale},
            {"out_interp", to_string(out_interp)},
            {"per_view_noise", per_view_noise},
            {"seed", seed}};
}

DegradationParams DegradationParams::from_json(const nlohmann::json& j) {
    DegradationParams p;
    p.first = stage_from_json(j.at("first"));
    p.second_enabled = j.at("second_enabled");
    p.second = stage_from_json(j.at("second"));
    p.out_scale = j.at("out_scale");
    p.out_interp = interp_from_string(j.at("out_interp"));
    p.per_view_noise = j.at("per_view_noise");
    p.seed = j.at("seed");
    return p;
}

void DegradationConfig::validate() const {
    auto prob = [](double p, const char* n) {
        if (!(p >= 0.0 && p <= 1.0)) throw RangeError(std::string("degradation: ") + n + " must lie in [0,1]");
    };
    auto range = [](const Range& r, double min, const char* n) {
        if (!(r.lo <= r.hi) || r.lo < min) throw RangeError(std::string("degradation: invalid range for ") + n);
    };
    prob(blur_prob, "blur_prob");
    prob(aniso_prob, "aniso_prob");
    prob(second_prob, "second_prob");
    range(sigma, 1e-6, "sigma");
    range(resize, 1e-3, "resize");
    range(noise, 0.0, "noise");
    range(compress, 0.0, "compress");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw RangeError("degradation: kernel_size must be odd");
    if (out_scale < 1) throw RangeError("degradation: out_scale must be positive");
    if (interps.empty()) throw RangeError("degradation: no interpolation modes configured");
}

DegradationParams sample_degradation(std::uint64_t seed, const DegradationConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(seed, 0xde9);
    DegradationParams p;
    p.first = sample_stage(rng, cfg);
    p.second_enabled = bernoulli(rng, cfg.second_prob);
    p.second = sample_stage(rng, cfg);
    p.out_scale = cfg.out_scale;
    p.per_view_noise = cfg.per_view_noise;
    p.seed = seed;
    return p;
}

Tensor degrade_image(const Tensor& img, const DegradationParams& p, int view) {
    require_image(img, "degrade_image");
    const int h = img.dim(1), w = img.dim(2);
    if (h % p.out_scale || w % p.out_scale) throw ShapeError("degrade: image size not divisible by out_scale");
    const std::uint64_t stream = p.per_view_noise ? static_cast<std::uint64_t>(view) : 0;
    Rng rng1 = make_rng(p.seed, 1, stream);
    Tensor x = apply_stage(img, p.first, rng1);
    if (p.second_enabled) {
        Rng rng2 = make_rng(p.seed, 2, stream);
        x = apply_stage(x, p.second, rng2);
    }
    x = resize(x, h / p.out_scale, w / p.out_scale, p.out_interp);
    for (double& v : x.vec()) v = std::clamp(v, 0.0, 1.0);
    return x;
}

StereoImagePair degrade_pair(const StereoImagePair& hr, const DegradationParams& p) {
    require_same_shape(hr.left, hr.right, "degrade_pair");
    return {degrade_image(hr.left, p, 0), degrade_image(hr.right, p, 1)};
}

// ---------------------------------------------------------------------------
// Procedural scenes

namespace {

constexpr std::array<std::array<double, 3>, 12> kColors{{
    {0.85, 0.15, 0.15}, {0.15, 0.75, 0.2},  {0.15, 0.3, 0.9},  {0.95, 0.85, 0.1},
    {0.1, 0.85, 0.85},  {0.85, 0.15, 0.85}, {0.95, 0.55, 0.1}, {0.5, 0.2, 0.7},
    {0.95, 0.95, 0.95}, {0.5, 0.5, 0.5},    {0.55, 0.35, 0.15}, {0.95, 0.6, 0.75},
}};

enum Shape : int { rectangle, disk, triangle, bar };
enum Texture : int { checker, stripes, dots, noise, grid, smooth };
enum Background : int { bg_noise, bg_gradient, bg_dark, bg_light, bg_tinted };

// Tag ids follow TagVocabulary::toy().
constexpr int kShapeTag = 0, kTextureTag = 4, kColorTag = 10, kBackgroundTag = 22, kCountTag = 27;
constexpr int kLargeDispTag = 30, kSmallDispTag = 31;

std::uint64_t hash2(std::uint64_t seed, int u, int v) {
    return derive_seed(seed, static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)),
                       static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
}

double hash01(std::uint64_t seed, int u, int v) { return static_cast<double>(hash2(seed, u, v) >> 11) * 0x1.0p-53; }

// Bilinearly interpolated lattice noise in [0,1]; (u, v) are continuous pixel
// coordinates and `cell` is the lattice spacing in pixels.
double value_noise(std::uint64_t seed, double u, double v, int cell) {
    const double fu = u / cell, fv = v / cell;
    const int iu = static_cast<int>(std::floor(fu)), iv = static_cast<int>(std::floor(fv));
    const double a = fu - iu, b = fv - iv;
    const double top = (1 - a) * hash01(seed, iu, iv) + a * hash01(seed, iu + 1, iv);
    const double bottom = (1 - a) * hash01(seed, iu, iv + 1) + a * hash01(seed, iu + 1, iv + 1);
    return (1 - b) * top + b * bottom;
}

// Each pixel is box-filtered from kSub x kSub samples.
constexpr int kSub = 4;

struct Object {
    int shape, texture, color, disp;
    int x0, y0, w, h;
    int period;
    int slant;  // stripe direction: 0 vertical, +-1 diagonal
    std::uint64_t seed;

    // Object-local continuous coordinates; the pixel at local column u covers [u, u+1).
    bool inside(double u, double v) const {
        if (u < 0 || v < 0 || u >= w || v >= h) return false;
        switch (shape) {
            case disk: {
                const double dx = u / w - 0.5, dy = v / h - 0.5;
                return dx * dx + dy * dy <= 0.25;
            }
            case triangle: return std::abs(u - 0.5 * w) <= 0.5 * w * v / h;
            default: return true;
        }
    }

    double texture_value(double u, double v) const {
        const double tau = 2.0 * std::numbers::pi;
        switch (texture) {
            case checker: {
                const int cu = static_cast<int>(std::floor(u / period)), cv = static_cast<int>(std::floor(v / period));
                return ((cu + cv) % 2) ? 1.0 : 0.0;
            }
            case stripes: return 0.5 + 0.5 * std::sin(tau * (u + slant * v) / (2.0 * period));
            case dots: {
                const int cell = period + 3;
                const double du = std::fmod(u, cell) - 0.5 * cell, dv = std::fmod(v, cell) - 0.5 * cell;
                return du * du + dv * dv <= 0.2 * period * period ? 1.0 : 0.15 + 0.15 * value_noise(seed, u, v, cell);
            }
            case noise: return value_noise(seed, u, v, period);
            case grid: return (std::fmod(u, period + 4) < 2 || std::fmod(v, period + 4) < 2) ? 1.0 : 0.25;
            default: return 0.5 + 0.5 * std::sin(tau * u / (2.0 * period + 3.0)) * std::cos(tau * v / 17.0);
        }
    }

    std::array<double, 3> colour(double u, double v) const {
        const double t = texture_value(u, v);
        const auto& c = kColors[static_cast<std::size_t>(color)];
        return {c[0] * (0.3 + 0.7 * t), c[1] * (0.3 + 0.7 * t), c[2] * (0.3 + 0.7 * t)};
    }

    /// Box-filtered colour sum and covered sample count over local pixel (u, v).
    int sample(int u, int v, std::array<double, 3>& sum) const {
        int covered = 0;
        sum = {};
        if (u < -1 || v < -1 || u > w || v > h) return 0;
        for (int i = 0; i < kSub; ++i)
            for (int j = 0; j < kSub; ++j) {
                const double su = u + (j + 0.5) / kSub, sv = v + (i + 0.5) / kSub;
                if (!inside(su, sv)) continue;
                const auto c = colour(su, sv);
                for (int ch = 0; ch < 3; ++ch) sum[static_cast<std::size_t>(ch)] += c[static_cast<std::size_t>(ch)];
                ++covered;
            }
        return covered;
    }
};

}  // namespace

namespace {

void check_scene(const SceneConfig& cfg) {
    if (cfg.size < 16 || cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects || cfg.min_disp < 0 ||
        cfg.max_disp < cfg.min_disp || cfg.max_disp >= cfg.size / 2)
        throw RangeError("scene: invalid configuration");
    cfg.degradation.validate();
}

}  // namespace

StereoSample render_scene(std::uint64_t seed, const SceneConfig& cfg) {
    check_scene(cfg);
    Rng rng = make_rng(seed, 0x5ce);
    auto randint = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int n = cfg.size;

    StereoSample s;
    s.hr.left = Tensor({3, n, n});
    const int background = randint(0, 4);
    const auto tint = kColors[static_cast<std::size_t>(randint(0, 11))];
    const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    const std::uint64_t bg_seed = derive_seed(seed, 0xb9);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            std::array<double, 3> c{};
            switch (background) {
                case bg_noise: {
                    const double g = 0.25 + 0.5 * value_noise(bg_seed, x + 0.5, y + 0.5, 8);
                    c = {g, g, g};
                    break;
                }
                case bg_gradient: {
                    const double g = 0.5 + 0.35 * (std::cos(angle) * (x - n / 2.0) + std::sin(angle) * (y - n / 2.0)) / n * 2.0;
                    c = {g, 0.8 * g + 0.1, 1.0 - g};
                    break;
                }
                case bg_dark: c = {0.12, 0.12, 0.14}; break;
                case bg_light: c = {0.85, 0.85, 0.82}; break;
                default: c = {0.3 + 0.4 * tint[0], 0.3 + 0.4 * tint[1], 0.3 + 0.4 * tint[2]};
            }
            for (int ch = 0; ch < 3; ++ch) s.hr.left.at(0, ch, y, x) = c[static_cast<std::size_t>(ch)];
        }
    s.hr.right = s.hr.left;

    const int count = randint(cfg.min_objects, cfg.max_objects);
    std::vector<Object> objects;
    for (int i = 0; i < count; ++i) {
        Object o{};
        o.shape = randint(0, 3);
        o.texture = randint(0, 5);
        o.color = randint(0, 11);
        o.disp = randint(cfg.min_disp, cfg.max_disp);
        o.w = o.shape == bar ? randint(n / 10, n / 6) : randint(n / 5, n * 2 / 5);
        o.h = o.shape == bar ? randint(n / 2, n * 3 / 4) : randint(n / 5, n * 2 / 5);
        o.x0 = randint(0, n - o.w);
        o.y0 = randint(0, n - o.h);
        o.period = randint(6, 10);
        o.slant = randint(-1, 1);
        o.seed = derive_seed(seed, 0x0b, static_cast<std::uint64_t>(i));
        objects.push_back(o);
    }
    // Farther objects (smaller disparity) are painted first.
    std::stable_sort(objects.begin(), objects.end(), [](const Object& a, const Object& b) { return a.disp < b.disp; });

    // owner: topmost object touching the pixel (-1 for background); full: the
    // owner covers every sample. Only fully covered pixels with the same owner in
    // both views are valid correspondences.
    const std::size_t nn_ = static_cast<std::size_t>(n * n);
    std::vector<int> owner_left(nn_, -1), owner_right(nn_, -1);
    std::vector<std::uint8_t> full_left(nn_, 1), full_right(nn_, 1);
    auto paint = [&](Tensor& img, std::vector<int>& owner, std::vector<std::uint8_t>& full, int i, int x, int y, int u,
                     int v) {
        std::array<double, 3> sum;
        const int covered = objects[static_cast<std::size_t>(i)].sample(u, v, sum);
        if (covered == 0) return;
        const double a = static_cast<double>(covered) / (kSub * kSub);
        for (int ch = 0; ch < 3; ++ch) {
            double& px = img.at(0, ch, y, x);
            px = (1.0 - a) * px + sum[static_cast<std::size_t>(ch)] / (kSub * kSub);
        }
        const std::size_t k = static_cast<std::size_t>(y * n + x);
        owner[k] = i;
        full[k] = covered == kSub * kSub;
    };
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const Object& o = objects[i];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                paint(s.hr.left, owner_left, full_left, static_cast<int>(i), x, y, x - o.x0, y - o.y0);
                paint(s.hr.right, owner_right, full_right, static_cast<int>(i), x, y, x + o.disp - o.x0, y - o.y0);
            }
    }

    s.disparity.height = s.disparity.width = n;
    s.disparity.values.assign(nn_, 0.0f);
    s.disparity.valid.assign(nn_, 0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const std::size_t k = static_cast<std::size_t>(y * n + x);
            const int own = owner_left[k];
            const int d = own < 0 ? 0 : objects[static_cast<std::size_t>(own)].disp;
            s.disparity.values[k] = static_cast<float>(d);
            const int xr = x - d;
            if (xr < 0) continue;
            const std::size_t kr = static_cast<std::size_t>(y * n + xr);
            s.disparity.valid[k] = owner_right[kr] == own && full_left[k] && full_right[kr];
        }

    int max_d = 0;
    for (const Object& o : objects) {
        s.tags.push_back(kShapeTag + o.shape);
        s.tags.push_back(kTextureTag + o.texture);
        s.tags.push_back(kColorTag + o.color);
        max_d = std::max(max_d, o.disp);
    }
    s.tags.push_back(kBackgroundTag + background);
    s.tags.push_back(kCountTag + std::min(count, 3) - 1);
    s.tags.push_back(max_d >= cfg.large_disp ? kLargeDispTag : kSmallDispTag);
    std::sort(s.tags.begin(), s.tags.end());
    s.tags.erase(std::unique(s.tags.begin(), s.tags.end()), s.tags.end());

    s.degradation = sample_degradation(derive_seed(seed, 0xd5), cfg.degradation);
    s.lr = degrade_pair(s.hr, s.degradation);
    return s;
}

std::vector<StereoSample> synth_stereo_dataset(int n, std::uint64_t seed, const SceneConfig& cfg) {
    if (n < 1) throw RangeError("synth_stereo_dataset: n must be at least 1");
    check_scene(cfg);
    std::vector<StereoSample> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = render_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), cfg);
        out[static_cast<std::size_t>(i)].id = i;
    }
    return out;
}

}  // namespace sdsr
