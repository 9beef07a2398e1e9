#pragma once

// Stereo omni-attention restorer (SOAN) and the dual control branch it feeds.
//
// SOAN: head conv -> SOAG groups -> tail conv -> pixel shuffle, plus a bicubic
// skip. Each SOAG chains a local conv block, windowed self-attention,
// full-spatial self-attention, an ESA block and SCATM cross-view fusion.
// The control branch embeds the restored pair at latent resolution, runs a
// copy of the UNet encoder and emits one zero-initialized projection per level.

#include <functional>
#include <string>
#include <vector>

#include "sdsr/degradation.hpp"
#include "sdsr/dual_unet.hpp"
#include "sdsr/optim.hpp"

namespace sdsr {

/// Cross-view attention with residual gains and no time branch.
struct ScatmParams {
    nn::Linear query_key_left, query_key_right;
    nn::Linear value_left, value_right;
    nn::GcBlock gc1, gc2, gc3;
    Var gamma_left, gamma_right;
    Var tau;  // fixed at 1
};
ScatmParams make_scatm(nn::ParamStore& s, const std::string& prefix, int channels, Rng& rng);
/// Direction-specific term GC2(GC1(TA)) + GC3(TA).
Var scatm_term(const Var& z_left, const Var& z_right, const ScatmParams& p, Direction dir);
std::pair<Var, Var> scatm(const Var& z_left, const Var& z_right, const ScatmParams& p);
/// Stacked variant: first half left, second half right.
Var scatm_stacked(const Var& h, const ScatmParams& p);

enum class SoanLoss { l1, adversarial };
std::string to_string(SoanLoss m);
SoanLoss soan_loss_from_string(const std::string& s);

struct SoanConfig {
    int channels = 32;
    int groups = 2;
    int window = 4;
    int scale = 4;
    int lr_size = 16;
};

class Soan {
public:
    Soan(const SoanConfig& cfg, nn::ParamStore& store, Rng& rng);

    const SoanConfig& config() const { return m_cfg; }
    SoanLoss loss_mode = SoanLoss::l1;

    /// [B,3,h,w] per view -> [B,3,4h,4w] per view, unclamped.
    std::pair<Var, Var> forward(const Var& lr_left, const Var& lr_right) const;
    /// Clamped, gradient-free restoration of a pair or of stacked batches.
    StereoImagePair restore(const StereoImagePair& lr) const;

private:
    struct Group {
        nn::Conv2d lcb1, lcb2;
        nn::Linear meso_qkv, meso_out;
        nn::Linear global_qkv, global_out;
        nn::Conv2d esa_reduce, esa_down, esa_mid, esa_expand;
        ScatmParams fuse;
        nn::Conv2d conv;
    };
    Var self_attention(const Var& x, const nn::Linear& qkv, const nn::Linear& out, int window) const;
    Var esa(const Var& x, const Group& g) const;
    Var group(const Var& x, const Group& g) const;

    SoanConfig m_cfg;
    nn::Conv2d m_head;
    std::vector<Group> m_groups;
    nn::Conv2d m_body;
    nn::Conv2d m_tail;
    Var m_one;
};

/// Bicubic x scale upsampling of every image in a [B,3,h,w] batch.
Tensor bicubic_upsample(const Tensor& batch, int scale);

struct SoanTrainOptions {
    SoanLoss loss = SoanLoss::l1;
    int epochs = 10;
    int batch = 8;
    double lr = 1e-3;
    double adv_weight = 0.02;
    std::uint64_t seed = 0;
};

/// Trains the SOAN on (LR, HR) pairs. The patch discriminator used in adversarial
/// mode lives in a local store and is discarded.
TrainHistory soan_pretrain(Soan& soan, const nn::ParamStore& store, const std::vector<StereoSample>& data,
                           const SoanTrainOptions& opt);

/// Mean per-pixel L1 of SOAN output and of bicubic upsampling against HR.
struct RestorationScore {
    double soan_l1 = 0.0, bicubic_l1 = 0.0;
};
RestorationScore score_restoration(const Soan& soan, const std::vector<StereoSample>& data);

/// Three shared convolutions (two of them strided when the factor is 4) followed by SCATM.
class ControlEmbed {
public:
    ControlEmbed(int factor, int out_channels, nn::ParamStore& store, Rng& rng, const std::string& prefix = "control.embed");
    int factor() const { return m_factor; }
    /// Stacked [2B,3,H,W] images -> stacked [2B,C,H/f,W/f] features.
    Var operator()(const Var& images) const;

private:
    int m_factor;
    nn::Conv2d m_c1, m_c2, m_c3;
    ScatmParams m_fuse;
};

class DualControlNet {
public:
    DualControlNet(const DualUNetConfig& unet_cfg, int factor, nn::ParamStore& store, Rng& rng,
                   const std::string& prefix = "control");

    int levels() const { return static_cast<int>(m_proj.size()); }
    /// Per-level stacked features for the UNet decoder skips, finest first.
    std::vector<Var> forward(const Var& z_left, const Var& z_right, const Var& images_stacked,
                             const std::vector<int>& t, const PromptBundle& prompts) const;
    /// Copies encoder weights from a UNet store registered under `unet_prefix`.
    void init_from_unet(nn::ParamStore& store, const nn::ParamStore& unet_store, const std::string& unet_prefix) const;

private:
    DualUNetConfig m_cfg;
    std::string m_prefix;
    ControlEmbed m_embed;
    EncoderStack m_enc;
    std::vector<nn::Conv2d> m_proj;
};

}  // namespace sdsr
