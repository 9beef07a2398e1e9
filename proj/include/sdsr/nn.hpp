#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdsr/autograd.hpp"

namespace sdsr::nn {

using ag::Var;

/// Owns every named parameter of one component. Layers hold handles that alias
/// the stored nodes, so an update through the store is seen by every user.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init, bool trainable = true);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return m_index.count(name) != 0; }

    const std::vector<std::pair<std::string, Var>>& entries() const { return m_entries; }
    std::vector<std::pair<std::string, Var>> with_prefix(const std::string& prefix) const;
    /// Entries that require gradients, optionally restricted to a name prefix.
    std::vector<std::pair<std::string, Var>> trainable(const std::string& prefix = "") const;
    std::size_t size() const { return m_entries.size(); }
    std::size_t numel() const;

    /// Combined checksum of every parameter value, in registration order.
    std::uint64_t checksum() const;
    void zero_grad();

    /// Name -> value snapshot, and the inverse (shapes must match).
    std::map<std::string, Tensor> snapshot() const;
    void restore(const std::map<std::string, Tensor>& values);

private:
    std::vector<std::pair<std::string, Var>> m_entries;
    std::unordered_map<std::string, std::size_t> m_index;
};

/// Number of normalization groups for a channel count (largest of 8,4,2,1 that divides it).
int norm_groups(int channels);

struct Conv2d {
    Var weight, bias;
    int stride = 1, pad = 0;
    Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
};

/// 'same' padding for odd kernels; zero_init gives an all-zero projection.
Conv2d make_conv(ParamStore& s, const std::string& name, int cin, int cout, int k, int stride, Rng& rng,
                 bool zero_init = false);

struct Linear {
    Var weight, bias;
    Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
};

Linear make_linear(ParamStore& s, const std::string& name, int din, int dout, Rng& rng, bool with_bias = true,
                   bool zero_init = false);

struct GroupNorm {
    Var gamma, beta;
    int groups = 1;
    Var operator()(const Var& x) const { return ag::group_norm(x, groups, gamma, beta); }
};

GroupNorm make_group_norm(ParamStore& s, const std::string& name, int channels);

/// GroupNorm -> SiLU -> 3x3 conv.
struct GcBlock {
    GroupNorm norm;
    Conv2d conv;
    Var operator()(const Var& x) const { return conv(ag::silu(norm(x))); }
};

GcBlock make_gc_block(ParamStore& s, const std::string& name, int cin, int cout, Rng& rng);

/// Two GC blocks with a time-embedding injection and a residual path.
struct ResBlock {
    GcBlock block1, block2;
    Linear time_proj;
    Conv2d skip;
    bool has_skip = false;
    Var operator()(const Var& x, const Var& temb) const;
};

ResBlock make_res_block(ParamStore& s, const std::string& name, int cin, int cout, int time_dim, Rng& rng);

}  // namespace sdsr::nn
