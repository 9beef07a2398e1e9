#pragma once

// Deterministic toy autoencoder mapping images to diffusion latents. Bypass
// mode (factor 1) is the identity on pixels.

#include <vector>

#include "sdsr/degradation.hpp"
#include "sdsr/nn.hpp"
#include "sdsr/optim.hpp"

namespace sdsr {

using ag::Var;

struct CodecConfig {
    int factor = 4;
    int latent_channels = 4;
    int width = 16;
    bool bypass = false;
    /// Multiplies encoder outputs so latents have roughly unit variance.
    double latent_scale = 1.0;
};

class LatentCodec {
public:
    LatentCodec(const CodecConfig& cfg, nn::ParamStore& store, Rng& rng);

    const CodecConfig& config() const { return m_cfg; }
    int factor() const { return m_cfg.bypass ? 1 : m_cfg.factor; }
    int channels() const { return m_cfg.bypass ? 3 : m_cfg.latent_channels; }
    Shape latent_shape(int h, int w) const { return {channels(), h / factor(), w / factor()}; }

    /// [B,3,H,W] -> [B,c,H/f,W/f], scaled by latent_scale.
    Var encode(const Var& images) const;
    Var decode(const Var& latents) const;
    /// Gradient-free versions accepting [3,H,W] or [B,3,H,W].
    Tensor encode(const Tensor& image) const;
    Tensor decode(const Tensor& latent) const;

    double latent_scale() const { return m_scale.value()[0]; }
    /// Sets latent_scale to 1/std of raw encoder outputs over the given images.
    void calibrate_scale(const std::vector<Tensor>& images);

private:
    Var encode_raw(const Var& images) const;

    CodecConfig m_cfg;
    std::vector<nn::Conv2d> m_enc, m_dec;
    nn::Conv2d m_enc_out, m_dec_in, m_dec_out, m_enc_skip, m_dec_skip;
    Var m_scale;  // [1], stored in the checkpoint
};

struct CodecTrainOptions {
    int epochs = 10;
    int batch = 16;
    double lr = 2e-3;
    std::uint64_t seed = 0;
};

/// L2 reconstruction training on every HR view of the dataset, then scale calibration.
TrainHistory pretrain_codec(LatentCodec& codec, const nn::ParamStore& store, const std::vector<StereoSample>& data,
                            const CodecTrainOptions& opt);

}  // namespace sdsr
