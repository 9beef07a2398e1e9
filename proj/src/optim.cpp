#include "sdsr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sdsr::nn {

Adam::Adam(std::vector<std::pair<std::string, Var>> params, AdamOptions opts)
    : m_params(std::move(params)), m_opts(opts) {
    for (const auto& [name, p] : m_params) {
        m_m.emplace_back(p.shape());
        m_v.emplace_back(p.shape());
    }
}

void Adam::zero_grad() {
    for (auto& [name, p] : m_params) p.zero_grad();
}

double Adam::step() {
    double sq = 0.0;
    for (const auto& [name, p] : m_params)
        for (double g : p.grad().vec()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw std::runtime_error("Adam: non-finite gradient norm");
    const double clip = (m_opts.clip_norm > 0.0 && norm > m_opts.clip_norm) ? m_opts.clip_norm / norm : 1.0;

    ++m_step;
    const double bc1 = 1.0 - std::pow(m_opts.beta1, static_cast<double>(m_step));
    const double bc2 = 1.0 - std::pow(m_opts.beta2, static_cast<double>(m_step));
    for (std::size_t i = 0; i < m_params.size(); ++i) {
        Var& p = m_params[i].second;
        if (p.grad().empty()) continue;
        Tensor& value = p.mutable_value();
        const Tensor& g = p.grad();
        Tensor& m = m_m[i];
        Tensor& v = m_v[i];
        for (std::size_t j = 0; j < value.numel(); ++j) {
            const double gj = g[j] * clip;
            m[j] = m_opts.beta1 * m[j] + (1.0 - m_opts.beta1) * gj;
            v[j] = m_opts.beta2 * v[j] + (1.0 - m_opts.beta2) * gj * gj;
            value[j] -= m_opts.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + m_opts.eps);
        }
    }
    return norm;
}

std::map<std::string, Tensor> Adam::state() const {
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < m_params.size(); ++i) {
        out.emplace("m." + m_params[i].first, m_m[i]);
        out.emplace("v." + m_params[i].first, m_v[i]);
    }
    out.emplace("step", Tensor({1}, static_cast<double>(m_step)));
    return out;
}

void Adam::load_state(const std::map<std::string, Tensor>& state) {
    for (std::size_t i = 0; i < m_params.size(); ++i) {
        const auto m = state.find("m." + m_params[i].first);
        const auto v = state.find("v." + m_params[i].first);
        if (m == state.end() || v == state.end())
            throw std::out_of_range("optimizer state missing entry for " + m_params[i].first);
        require_same_shape(m->second, m_m[i], "Adam::load_state");
        m_m[i] = m->second;
        m_v[i] = v->second;
    }
    const auto s = state.find("step");
    if (s == state.end()) throw std::out_of_range("optimizer state missing step counter");
    m_step = static_cast<long>(s->second[0]);
}

}  // namespace sdsr::nn
