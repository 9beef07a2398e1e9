#include "sdsr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sdsr::nn {

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Var v(std::move(init), trainable);
    m_index.emplace(name, m_entries.size());
    m_entries.emplace_back(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = m_index.find(name);
    if (it == m_index.end()) throw std::out_of_range("unknown parameter: " + name);
    return m_entries[it->second].second;
}

std::vector<std::pair<std::string, Var>> ParamStore::with_prefix(const std::string& prefix) const {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& e : m_entries)
        if (e.first.rfind(prefix, 0) == 0) out.push_back(e);
    return out;
}

std::vector<std::pair<std::string, Var>> ParamStore::trainable(const std::string& prefix) const {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& e : with_prefix(prefix))
        if (e.second.requires_grad()) out.push_back(e);
    return out;
}

std::size_t ParamStore::numel() const {
    std::size_t n = 0;
    for (const auto& e : m_entries) n += e.second.value().numel();
    return n;
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0;
    for (const auto& e : m_entries) h = checksum_combine(h, sdsr::checksum(e.second.value()));
    return h;
}

void ParamStore::zero_grad() {
    for (auto& e : m_entries) e.second.zero_grad();
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& e : m_entries) out.emplace(e.first, e.second.value());
    return out;
}

void ParamStore::restore(const std::map<std::string, Tensor>& values) {
    for (auto& [name, var] : m_entries) {
        auto it = values.find(name);
        if (it == values.end()) throw std::out_of_range("missing parameter in snapshot: " + name);
        if (!it->second.same_shape(var.value()))
            throw ShapeError("parameter " + name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                             shape_str(var.shape()));
        var.mutable_value() = it->second;
    }
}

int norm_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0 && channels / g >= 2) return g;
    return 1;
}

Conv2d make_conv(ParamStore& s, const std::string& name, int cin, int cout, int k, int stride, Rng& rng,
                 bool zero_init) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    Tensor w = zero_init ? Tensor({cout, cin, k, k}) : Tensor::uniform({cout, cin, k, k}, rng, -bound, bound);
    Conv2d c;
    c.weight = s.add(name + ".weight", std::move(w));
    c.bias = s.add(name + ".bias", Tensor({cout}));
    c.stride = stride;
    c.pad = k / 2;
    return c;
}

Linear make_linear(ParamStore& s, const std::string& name, int din, int dout, Rng& rng, bool with_bias,
                   bool zero_init) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(din));
    Tensor w = zero_init ? Tensor({dout, din}) : Tensor::uniform({dout, din}, rng, -bound, bound);
    Linear l;
    l.weight = s.add(name + ".weight", std::move(w));
    if (with_bias) l.bias = s.add(name + ".bias", Tensor({dout}));
    return l;
}

GroupNorm make_group_norm(ParamStore& s, const std::string& name, int channels) {
    GroupNorm g;
    g.gamma = s.add(name + ".gamma", Tensor::ones({channels}));
    g.beta = s.add(name + ".beta", Tensor({channels}));
    g.groups = norm_groups(channels);
    return g;
}

GcBlock make_gc_block(ParamStore& s, const std::string& name, int cin, int cout, Rng& rng) {
    GcBlock b;
    b.norm = make_group_norm(s, name + ".norm", cin);
    b.conv = make_conv(s, name + ".conv", cin, cout, 3, 1, rng);
    return b;
}

Var ResBlock::operator()(const Var& x, const Var& temb) const {
    Var h = block1(x);
    h = ag::add_channel_vector(h, time_proj(ag::silu(temb)));
    h = block2(h);
    return ag::add(has_skip ? skip(x) : x, h);
}

ResBlock make_res_block(ParamStore& s, const std::string& name, int cin, int cout, int time_dim, Rng& rng) {
    ResBlock r;
    r.block1 = make_gc_block(s, name + ".block1", cin, cout, rng);
    r.time_proj = make_linear(s, name + ".time_proj", time_dim, cout, rng);
    r.block2 = make_gc_block(s, name + ".block2", cout, cout, rng);
    r.has_skip = cin != cout;
    if (r.has_skip) r.skip = make_conv(s, name + ".skip", cin, cout, 1, 1, rng);
    return r;
}

}  // namespace sdsr::nn
