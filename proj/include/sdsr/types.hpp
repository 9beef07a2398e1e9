#pragma once

#include <utility>
#include <vector>

#include "sdsr/autograd.hpp"

namespace sdsr {

using ag::Var;

/// Left/right RGB images, each [3,H,W] with values in [0,1].
struct StereoImagePair {
    Tensor left;
    Tensor right;

    int height() const { return left.dim(1); }
    int width() const { return left.dim(2); }
    StereoImagePair swapped() const { return {right, left}; }
};

/// Prompt embeddings for a batch. Soft tokens are per view; hard tokens come from
/// the (merged) tag set and are zero-padded past hard_len. When tags are merged the
/// left and right hard tensors are identical.
struct PromptBundle {
    Tensor soft_left, soft_right;  // [B, Ls, D]
    Tensor hard_left, hard_right;  // [B, Lh, D]
    std::vector<int> hard_len_left, hard_len_right;

    int batch() const { return soft_left.dim(0); }
    int dim() const { return soft_left.dim(2); }
    PromptBundle swapped() const;
    /// Stacks single-item bundles along the batch axis, padding hard tokens.
    static PromptBundle stack(const std::vector<const PromptBundle*>& items);
};

/// Multi-scale control features, one (left, right) pair per UNet level, finest first.
struct ControlFeatures {
    std::vector<std::pair<ag::Var, ag::Var>> scales;
};

/// Loss curve of one training run.
struct TrainHistory {
    std::vector<double> step_losses;
    std::vector<double> epoch_losses;
};

}  // namespace sdsr
