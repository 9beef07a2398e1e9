#pragma once

// Stereo-consistent synthetic degradation and the procedural stereo scene
// generator used for every toy dataset. Images are [3,H,W] tensors in [0,1].

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdsr/types.hpp"

namespace sdsr {

enum class Interp { nearest, bilinear, bicubic, area };
std::string to_string(Interp i);
Interp interp_from_string(const std::string& s);

/// Separable resampling with pixel-centre alignment; downscaling widens the
/// kernel (antialiasing). Bicubic uses a = -0.5.
Tensor resize(const Tensor& img, int out_h, int out_w, Interp interp);

/// Normalized Gaussian kernel [size,size]; sigma_x along the rotated x axis.
Tensor gaussian_kernel(int size, double sigma_x, double sigma_y, double theta);
/// Per-channel 2D filtering with reflect padding.
Tensor filter2d(const Tensor& img, const Tensor& kernel);
/// 8x8 block DCT quantization per channel; step for frequency (u,v) is strength * (1 + u + v).
Tensor dct_quantize(const Tensor& img, double strength);

struct DegradationStage {
    bool blur = false;
    int kernel_size = 7;
    double sigma_x = 0.0, sigma_y = 0.0, theta = 0.0;
    double resize_factor = 1.0;
    Interp interp = Interp::bicubic;
    double noise_sigma = 0.0;
    double compress = 0.0;

    bool operator==(const DegradationStage&) const = default;
};

struct DegradationParams {
    DegradationStage first;
    bool second_enabled = false;
    DegradationStage second;
    /// Final downscale to H/out_scale (1 keeps the input size).
    int out_scale = 4;
    Interp out_interp = Interp::bicubic;
    /// Independent noise per view; when false both views receive the same realization.
    bool per_view_noise = true;
    std::uint64_t seed = 0;

    bool operator==(const DegradationParams&) const = default;
    nlohmann::json to_json() const;
    static DegradationParams from_json(const nlohmann::json& j);
};

struct Range {
    double lo = 0.0, hi = 0.0;
};

struct DegradationConfig {
    double blur_prob = 1.0;
    int kernel_size = 7;
    Range sigma{0.2, 1.2};
    double aniso_prob = 0.3;
    Range resize{0.6, 1.2};
    std::vector<Interp> interps{Interp::bilinear, Interp::bicubic, Interp::area};
    Range noise{0.0, 0.015};
    Range compress{0.0, 0.02};
    double second_prob = 0.3;
    int out_scale = 4;
    bool per_view_noise = true;

    void validate() const;
};

DegradationParams sample_degradation(std::uint64_t seed, const DegradationConfig& cfg);
Tensor degrade_image(const Tensor& img, const DegradationParams& p, int view);
StereoImagePair degrade_pair(const StereoImagePair& hr, const DegradationParams& p);

/// Per-pixel horizontal disparity (left-referenced) with a validity mask.
struct DisparityMap {
    int height = 0, width = 0;
    std::vector<float> values;
    std::vector<std::uint8_t> valid;

    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    bool ok(int y, int x) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
};

struct StereoSample {
    int id = 0;
    StereoImagePair hr, lr;
    DisparityMap disparity;
    std::vector<int> tags;  // toy vocabulary ids, sorted
    DegradationParams degradation;
};

struct SceneConfig {
    int size = 64;
    int min_objects = 1, max_objects = 3;
    int min_disp = 1, max_disp = 8;
    /// Disparity at or above this value adds the "large_disparity" tag.
    int large_disp = 5;
    DegradationConfig degradation;
};

/// One rendered scene: the right view is the left view with every object shifted
/// left by its integer disparity. Occluded left pixels are marked invalid.
StereoSample render_scene(std::uint64_t seed, const SceneConfig& cfg);
std::vector<StereoSample> synth_stereo_dataset(int n, std::uint64_t seed, const SceneConfig& cfg);

}  // namespace sdsr
