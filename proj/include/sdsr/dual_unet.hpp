#pragma once

// Shared-weight dual denoising UNet. Both views run through one parameter set:
// the pair is stacked along the batch axis as [left items; right items] and
// split only where TASCATA fuses the two halves.

#include <optional>
#include <string>
#include <vector>

#include "sdsr/schedule.hpp"
#include "sdsr/tascata.hpp"
#include "sdsr/types.hpp"

namespace sdsr {

struct DualUNetConfig {
    int latent_channels = 4;
    int base_channels = 64;
    std::vector<int> channel_mults{1, 2, 2};
    /// Levels with prompt cross-attention.
    std::vector<int> attn_levels{1, 2};
    /// Levels with TASCATA fusion; empty when fusion is disabled.
    std::vector<int> tascata_levels{1, 2};
    int time_dim = 64;
    int context_dim = 32;
    int T = 1000;
    double tau = 1.0;

    int levels() const { return static_cast<int>(channel_mults.size()); }
    int channels(int level) const { return base_channels * channel_mults.at(static_cast<std::size_t>(level)); }
    void validate() const;
};

/// Interleaved [sin(t f_0), cos(t f_0), sin(t f_1), ...] with f_i = 10000^(-i/(dim/2)).
Tensor sinusoid(const std::vector<int>& t, int dim);

/// LayerNorm'd query tokens attend to a prompt context; residual output.
struct PromptAttention {
    nn::Linear q, k, v, out;
    Var tau;
    Var operator()(const Var& x, const Var& context, const std::vector<int>& kv_len) const;
};
PromptAttention make_prompt_attention(nn::ParamStore& s, const std::string& name, int channels, int context_dim,
                                      Rng& rng);

/// Per-item prompt context [2B, L, D] for the stacked layout, with valid lengths.
struct StackedContext {
    Var tokens;
    std::vector<int> kv_len;
};
StackedContext stack_context(const PromptBundle& prompts);

/// Encoder half shared by the UNet and the control branch.
struct EncoderLevel {
    nn::ResBlock res;
    std::optional<PromptAttention> attn;
    std::optional<TascataParams> fuse;
    std::optional<nn::Conv2d> down;
};

struct EncoderStack {
    nn::Linear time1, time2;
    nn::Conv2d conv_in;
    std::vector<EncoderLevel> levels;

    Var time_embed(const std::vector<int>& t, int time_dim) const;
    /// Runs every level on stacked features; returns per-level outputs before downsampling.
    std::vector<Var> run(Var h, const Var& temb, const StackedContext& ctx, std::vector<Var>* bottom) const;
};
EncoderStack make_encoder(nn::ParamStore& s, const std::string& prefix, const DualUNetConfig& cfg, Rng& rng);

/// Applies TASCATA to the two halves of a stacked tensor.
Var fuse_stacked(const Var& h, const Var& temb, const TascataParams& p);

class DualUNet {
public:
    DualUNet(const DualUNetConfig& cfg, nn::ParamStore& store, Rng& rng, const std::string& prefix = "unet");

    const DualUNetConfig& config() const { return m_cfg; }
    bool fusion_enabled() const { return !m_cfg.tascata_levels.empty(); }

    /// Time embedding v_t for each batch item; throws RangeError outside [0, T).
    Var time_embed(const std::vector<int>& t) const;

    /// Predicted noise for both views. z_left/z_right are [B,C,h,w]; t has B entries.
    /// Controls, when given, hold per-level stacked features [2B, C_l, h_l, w_l], finest first.
    std::pair<Var, Var> forward(const Var& z_left, const Var& z_right, const std::vector<int>& t,
                                const PromptBundle& prompts, const std::vector<Var>* controls = nullptr) const;
    LatentPair forward(const LatentPair& z, int t, const PromptBundle& prompts,
                       const std::vector<Var>* controls = nullptr) const;

    /// Single-view pass (B items, no fusion). Only valid when fusion is disabled.
    Var forward_view(const Var& z, const std::vector<int>& t, const Tensor& soft, const Tensor& hard,
                     const std::vector<int>& hard_len, const std::vector<Var>* controls = nullptr) const;

    /// Expected control feature shapes per level for batch n (stacked), finest first.
    std::vector<Shape> control_shapes(int n, int h, int w) const;

private:
    Var run(const Var& z, const std::vector<int>& t, const StackedContext& ctx, const std::vector<Var>* controls) const;

    DualUNetConfig m_cfg;
    EncoderStack m_enc;
    nn::ResBlock m_mid;
    struct DecoderLevel {
        nn::ResBlock res;
        std::optional<PromptAttention> attn;
        std::optional<TascataParams> fuse;
        std::optional<nn::Conv2d> up;
    };
    std::vector<DecoderLevel> m_dec;  // coarsest first
    nn::GroupNorm m_out_norm;
    nn::Conv2d m_out;
};

}  // namespace sdsr
