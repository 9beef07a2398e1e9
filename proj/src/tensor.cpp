#include "sdsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sdsr {

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill) : m_shape(std::move(shape)), m_data(shape_numel(m_shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : m_shape(std::move(shape)), m_data(std::move(values)) {
    if (m_data.size() != shape_numel(m_shape))
        throw ShapeError("value count " + std::to_string(m_data.size()) + " does not match shape " +
                         shape_str(m_shape));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev) {
    Tensor t(shape);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.m_data) v = dist(rng);
    return t;
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.m_data) v = dist(rng);
    return t;
}

int Tensor::dim(int i) const {
    const int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw ShapeError("dim index out of range for " + shape_str(m_shape));
    return m_shape[static_cast<std::size_t>(i)];
}

double& Tensor::at(int n, int c, int y, int x) {
    const std::size_t r = m_shape.size();
    return m_data[((static_cast<std::size_t>(n) * m_shape[r - 3] + c) * m_shape[r - 2] + y) * m_shape[r - 1] + x];
}

double Tensor::at(int n, int c, int y, int x) const {
    const std::size_t r = m_shape.size();
    return m_data[((static_cast<std::size_t>(n) * m_shape[r - 3] + c) * m_shape[r - 2] + y) * m_shape[r - 1] + x];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(m_shape) + " to " + shape_str(shape));
    return Tensor(std::move(shape), m_data);
}

void Tensor::fill(double v) { std::fill(m_data.begin(), m_data.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < m_data.size(); ++i) m_data[i] += other.m_data[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < m_data.size(); ++i) m_data[i] -= other.m_data[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : m_data) v *= s;
    return *this;
}

double Tensor::sum() const { return std::accumulate(m_data.begin(), m_data.end(), 0.0); }

double Tensor::mean() const { return m_data.empty() ? 0.0 : sum() / static_cast<double>(m_data.size()); }

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : m_data) m = std::max(m, std::abs(v));
    return m;
}

Tensor Tensor::slice0(int start, int count) const {
    if (m_shape.empty() || start < 0 || count < 0 || start + count > m_shape[0])
        throw ShapeError("slice0 out of range for " + shape_str(m_shape));
    Shape s = m_shape;
    s[0] = count;
    const std::size_t inner = m_data.size() / static_cast<std::size_t>(m_shape[0]);
    std::vector<double> v(m_data.begin() + static_cast<std::ptrdiff_t>(start * inner),
                          m_data.begin() + static_cast<std::ptrdiff_t>((start + count) * inner));
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::concat0(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat0 of nothing");
    Shape s = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        Shape a = p.shape(), b = s;
        if (a.empty()) throw ShapeError("concat0 on scalar tensor");
        a[0] = b[0] = 0;
        if (a != b) throw ShapeError("concat0 shape mismatch");
        total += p.shape()[0];
    }
    s[0] = total;
    std::vector<double> v;
    v.reserve(shape_numel(s));
    for (const auto& p : parts) v.insert(v.end(), p.vec().begin(), p.vec().end());
    return Tensor(std::move(s), std::move(v));
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

std::uint64_t checksum(const Tensor& t) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (int d : t.shape()) mix(&d, sizeof d);
    mix(t.vec().data(), t.numel() * sizeof(double));
    return h;
}

std::uint64_t checksum_combine(std::uint64_t seed, std::uint64_t h) {
    return seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) { return Rng(derive_seed(seed, a, b)); }

}  // namespace sdsr
