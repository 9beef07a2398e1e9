#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdsr {

/// Thrown when tensor shapes disagree with an operation's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a scalar argument lies outside its valid range.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

using Shape = std::vector<int>;
using Rng = std::mt19937_64;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of doubles. Images and feature maps use NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }
    static Tensor ones(const Shape& shape) { return Tensor(shape, 1.0); }
    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

    const Shape& shape() const { return m_shape; }
    int ndim() const { return static_cast<int>(m_shape.size()); }
    /// Size of dimension i; negative i counts from the back.
    int dim(int i) const;
    std::size_t numel() const { return m_data.size(); }
    bool empty() const { return m_data.empty(); }

    std::span<double> data() { return m_data; }
    std::span<const double> data() const { return m_data; }
    std::vector<double>& vec() { return m_data; }
    const std::vector<double>& vec() const { return m_data; }

    double& operator[](std::size_t i) { return m_data[i]; }
    double operator[](std::size_t i) const { return m_data[i]; }

    /// Element of an NCHW tensor; rank-3 [C,H,W] tensors take n = 0.
    double& at(int n, int c, int y, int x);
    double at(int n, int c, int y, int x) const;

    Tensor reshaped(Shape shape) const;
    bool same_shape(const Tensor& other) const { return m_shape == other.m_shape; }

    void fill(double v);
    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    double sum() const;
    double mean() const;
    double max_abs() const;

    /// Sub-tensor along the leading axis: items [start, start + count).
    Tensor slice0(int start, int count) const;
    static Tensor concat0(const std::vector<Tensor>& parts);

private:
    Shape m_shape;
    std::vector<double> m_data;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

double max_abs_diff(const Tensor& a, const Tensor& b);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// FNV-1a over the raw bytes of the values; used for freeze contracts and checkpoints.
std::uint64_t checksum(const Tensor& t);
std::uint64_t checksum_combine(std::uint64_t seed, std::uint64_t h);

/// Deterministic seed derivation (splitmix64 chain) for independent substreams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);
Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace sdsr
