#pragma once

// Dense compute kernels used by the autodiff layer. Each kernel exists twice:
// the OpenMP-parallel version in sdsr::kernels and a plain serial loop in
// sdsr::kernels::ref. The reference versions are the test oracles and the
// baseline for bench/bench_kernels.
//
// All matrices are dense row-major. Parallel loops only partition output
// rows, so results do not depend on the thread count.

#include <span>

namespace sdsr::kernels {

/// C = alpha * op(A) * op(B) + beta * C, where op(A) is m x k and op(B) is k x n.
/// A is stored m x k (k x m when trans_a), B is k x n (n x k when trans_b).
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c);

struct ConvGeom {
    int cin = 0, h = 0, w = 0;
    int cout = 0, k = 1, stride = 1, pad = 0;

    int out_h() const { return (h + 2 * pad - k) / stride + 1; }
    int out_w() const { return (w + 2 * pad - k) / stride + 1; }
    int col_rows() const { return cin * k * k; }
    int col_cols() const { return out_h() * out_w(); }
};

/// Unfold one CHW image into a (cin*k*k) x (out_h*out_w) column matrix.
void im2col(const ConvGeom& g, std::span<const double> img, std::span<double> cols);
/// Scatter-add a column matrix back into a CHW image buffer.
void col2im(const ConvGeom& g, std::span<const double> cols, std::span<double> img);

/// Single-image convolution; weight is cout x cin x k x k, bias may be empty.
void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);
/// dx += conv_transpose(dy, weight)
void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> weight,
                           std::span<double> dx);
/// dw += dy (x) cols(x); db += row sums of dy (db may be empty)
void conv2d_backward_weight(const ConvGeom& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db);

/// Scaled dot-product attention for one batch item.
/// p (nq x nk) receives softmax(scale * q k^T) with keys at index >= kv_len masked out;
/// o (nq x cv) receives p v.
void attention_forward(int nq, int nk, int c, int cv, double scale, int kv_len, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v, std::span<double> p,
                       std::span<double> o);

/// In-place numerically stable softmax over the first `valid` entries of each row;
/// entries past `valid` are set to zero.
void softmax_rows(int rows, int cols, int valid, std::span<double> x);

namespace ref {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c);
void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> weight,
                           std::span<double> dx);
void conv2d_backward_weight(const ConvGeom& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db);
void attention_forward(int nq, int nk, int c, int cv, double scale, int kv_len, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v, std::span<double> p,
                       std::span<double> o);

}  // namespace ref

}  // namespace sdsr::kernels
