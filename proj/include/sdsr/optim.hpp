#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdsr/nn.hpp"

namespace sdsr::nn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip; <= 0 disables.
    double clip_norm = 1.0;
};

class Adam {
public:
    Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions opts);

    void zero_grad();
    /// Applies one update from the accumulated gradients and returns the pre-clip gradient norm.
    double step();

    long steps() const { return m_step; }
    const AdamOptions& options() const { return m_opts; }
    const std::vector<std::pair<std::string, Var>>& params() const { return m_params; }

    /// Moment buffers keyed "m.<name>" / "v.<name>" plus the step counter.
    std::map<std::string, Tensor> state() const;
    void load_state(const std::map<std::string, Tensor>& state);

private:
    std::vector<std::pair<std::string, Var>> m_params;
    std::vector<Tensor> m_m, m_v;
    AdamOptions m_opts;
    long m_step = 0;
};

}  // namespace sdsr::nn
