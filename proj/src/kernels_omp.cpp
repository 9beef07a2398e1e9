#include "sdsr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace sdsr::kernels {

namespace {

constexpr int kColBlock = 256;
constexpr long kParallelWork = 1L << 15;

// Row-major transpose of an r x c matrix into c x r.
void transpose(int r, int c, const double* src, double* dst) {
    constexpr int kTile = 32;
    for (int i0 = 0; i0 < r; i0 += kTile)
        for (int j0 = 0; j0 < c; j0 += kTile) {
            const int i1 = std::min(r, i0 + kTile), j1 = std::min(c, j0 + kTile);
            for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j) dst[static_cast<long>(j) * r + i] = src[static_cast<long>(i) * c + j];
        }
}

thread_local std::vector<double> t_transpose_b;
thread_local std::vector<double> t_cols;

}  // namespace

namespace {

// Dot product with four independent accumulators; the summation order is fixed.
double dot(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void scale_row(double* crow, int n, double beta) {
    if (beta == 0.0)
        std::fill(crow, crow + n, 0.0);
    else if (beta != 1.0)
        for (int j = 0; j < n; ++j) crow[j] *= beta;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c) {
    const double* pa = a.data();
    const double* pb = b.data();
    if (trans_a && trans_b) {
        t_transpose_b.resize(static_cast<std::size_t>(k) * n);
        transpose(n, k, pb, t_transpose_b.data());
        pb = t_transpose_b.data();
        trans_b = false;
    }
    double* pc = c.data();
    const long work = static_cast<long>(m) * n * k;

    if (trans_b) {
        // C[i][j] = A row i . B row j, both contiguous.
#pragma omp parallel for schedule(static) if (work > kParallelWork && m > 1)
        for (int i = 0; i < m; ++i) {
            double* crow = pc + static_cast<long>(i) * n;
            const double* arow = pa + static_cast<long>(i) * k;
            for (int j = 0; j < n; ++j) {
                const double d = alpha * dot(arow, pb + static_cast<long>(j) * k, k);
                crow[j] = beta == 0.0 ? d : beta * crow[j] + d;
            }
        }
        return;
    }

#pragma omp parallel for schedule(static) if (work > kParallelWork && m > 1)
    for (int i = 0; i < m; ++i) {
        double* crow = pc + static_cast<long>(i) * n;
        scale_row(crow, n, beta);
        for (int j0 = 0; j0 < n; j0 += kColBlock) {
            const int j1 = std::min(n, j0 + kColBlock);
            for (int p = 0; p < k; ++p) {
                // A is k x m when transposed, so element (i, p) sits at p * m + i.
                const double av = alpha * (trans_a ? pa[static_cast<long>(p) * m + i] : pa[static_cast<long>(i) * k + p]);
                if (av == 0.0) continue;
                const double* brow = pb + static_cast<long>(p) * n;
                for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

void im2col(const ConvGeom& g, std::span<const double> img, std::span<double> cols) {
    const int oh = g.out_h(), ow = g.out_w();
    const int rows = g.col_rows();
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * oh * ow > kParallelWork)
    for (int r = 0; r < rows; ++r) {
        const int ci = r / (g.k * g.k);
        const int ky = (r / g.k) % g.k;
        const int kx = r % g.k;
        double* dst = cols.data() + static_cast<long>(r) * oh * ow;
        const double* src = img.data() + static_cast<long>(ci) * g.h * g.w;
        for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            double* drow = dst + static_cast<long>(oy) * ow;
            if (iy < 0 || iy >= g.h) {
                std::fill(drow, drow + ow, 0.0);
                continue;
            }
            const double* srow = src + static_cast<long>(iy) * g.w;
            for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * g.stride - g.pad + kx;
                drow[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : 0.0;
            }
        }
    }
}

void col2im(const ConvGeom& g, std::span<const double> cols, std::span<double> img) {
    const int oh = g.out_h(), ow = g.out_w();
    const int kk = g.k * g.k;
    // Partition by input channel so no two threads write the same pixel.
#pragma omp parallel for schedule(static) if (static_cast<long>(g.cin) * kk * oh * ow > kParallelWork)
    for (int ci = 0; ci < g.cin; ++ci) {
        double* dst = img.data() + static_cast<long>(ci) * g.h * g.w;
        for (int kidx = 0; kidx < kk; ++kidx) {
            const int ky = kidx / g.k, kx = kidx % g.k;
            const double* src = cols.data() + (static_cast<long>(ci) * kk + kidx) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * g.stride - g.pad + ky;
                if (iy < 0 || iy >= g.h) continue;
                for (int ox = 0; ox < ow; ++ox) {
                    const int ix = ox * g.stride - g.pad + kx;
                    if (ix >= 0 && ix < g.w) dst[static_cast<long>(iy) * g.w + ix] += src[static_cast<long>(oy) * ow + ox];
                }
            }
        }
    }
}

void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
    const int ncols = g.col_cols();
    const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    std::span<const double> cols = x;
    if (!pointwise) {
        t_cols.resize(static_cast<std::size_t>(g.col_rows()) * ncols);
        im2col(g, x, t_cols);
        cols = t_cols;
    }
    gemm(false, false, g.cout, ncols, g.col_rows(), 1.0, weight, cols, 0.0, y);
    if (!bias.empty())
        for (int co = 0; co < g.cout; ++co) {
            double* row = y.data() + static_cast<long>(co) * ncols;
            for (int j = 0; j < ncols; ++j) row[j] += bias[co];
        }
}

void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> weight,
                           std::span<double> dx) {
    const int ncols = g.col_cols();
    if (g.k == 1 && g.stride == 1 && g.pad == 0) {
        gemm(true, false, g.cin, ncols, g.cout, 1.0, weight, dy, 1.0, dx);
        return;
    }
    t_cols.resize(static_cast<std::size_t>(g.col_rows()) * ncols);
    gemm(true, false, g.col_rows(), ncols, g.cout, 1.0, weight, dy, 0.0, t_cols);
    col2im(g, t_cols, dx);
}

void conv2d_backward_weight(const ConvGeom& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db) {
    const int ncols = g.col_cols();
    std::span<const double> cols = x;
    if (!(g.k == 1 && g.stride == 1 && g.pad == 0)) {
        t_cols.resize(static_cast<std::size_t>(g.col_rows()) * ncols);
        im2col(g, x, t_cols);
        cols = t_cols;
    }
    gemm(false, true, g.cout, g.col_rows(), ncols, 1.0, dy, cols, 1.0, dw);
    if (!db.empty())
        for (int co = 0; co < g.cout; ++co) {
            const double* row = dy.data() + static_cast<long>(co) * ncols;
            double s = 0.0;
            for (int j = 0; j < ncols; ++j) s += row[j];
            db[co] += s;
        }
}

void softmax_rows(int rows, int cols, int valid, std::span<double> x) {
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
    for (int i = 0; i < rows; ++i) {
        double* row = x.data() + static_cast<long>(i) * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < valid; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < valid; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < valid; ++j) row[j] *= inv;
        for (int j = valid; j < cols; ++j) row[j] = 0.0;
    }
}

void attention_forward(int nq, int nk, int c, int cv, double scale, int kv_len, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v, std::span<double> p,
                       std::span<double> o) {
    gemm(false, true, nq, nk, c, scale, q, k, 0.0, p);
    softmax_rows(nq, nk, kv_len, p);
    gemm(false, false, nq, cv, nk, 1.0, p, v, 0.0, o);
}

}  // namespace sdsr::kernels
