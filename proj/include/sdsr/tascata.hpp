#pragma once

// Time-aware stereo cross attention with a temperature-scaled softmax.
//
// For the right-to-left direction, queries come from the normalized left
// features, keys from the normalized right features and values from the raw
// right features:
//
//   TA      = softmax(tau * Q K^T / sqrt(C)) V
//   TASCA   = GC2(GC1(TA) + Wv v_t) + GC3(TA)
//   z_l*    = gamma_l * TASCA_{r->l} + z_l
//
// The left-to-right direction mirrors every projection. Both directions share
// the GC blocks and the time projection; the per-view projections W1/W2 stay
// tied to the view they read.

#include <string>
#include <utility>

#include "sdsr/nn.hpp"

namespace sdsr {

using ag::Var;

struct TascataParams {
    nn::Linear query_key_left;   // W1_l
    nn::Linear query_key_right;  // W1_r
    nn::Linear value_left;       // W2_l
    nn::Linear value_right;      // W2_r
    nn::Linear time_proj;        // Wv
    nn::GcBlock gc1, gc2, gc3;
    Var gamma_left, gamma_right;  // [1]
    Var tau;                      // [1], not trained by default
};

/// Registers a TASCATA block under `prefix`. Gains start at zero so the block is a pass-through.
TascataParams make_tascata(nn::ParamStore& store, const std::string& prefix, int channels, int time_dim, double tau,
                           Rng& rng);

enum class Direction { right_to_left, left_to_right };

/// softmax(tau q k^T / sqrt(C)) v on [N,C] or [B,N,C] inputs.
Var temperature_attention(const Var& q, const Var& k, const Var& v, const Var& tau);
Tensor temperature_attention(const Tensor& q, const Tensor& k, const Tensor& v, double tau);

/// Cross-view attention term for one direction. Inputs are [B,C,H,W]; v_t is [B,time_dim].
/// The result has the destination view's shape.
Var tasca(const Var& z_left, const Var& z_right, const Var& v_t, const TascataParams& p, Direction dir);

/// Residual fusion of both views.
std::pair<Var, Var> fuse_views(const Var& z_left, const Var& z_right, const Var& v_t, const TascataParams& p);

}  // namespace sdsr
