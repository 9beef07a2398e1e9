#include <algorithm>
#include <cmath>
#include <limits>

#include "sdsr/kernels.hpp"

namespace sdsr::kernels::ref {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, std::span<const double> a,
          std::span<const double> b, double beta, std::span<double> c) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = trans_a ? a[static_cast<long>(p) * m + i] : a[static_cast<long>(i) * k + p];
                const double bv = trans_b ? b[static_cast<long>(j) * k + p] : b[static_cast<long>(p) * n + j];
                s += av * bv;
            }
            double& out = c[static_cast<long>(i) * n + j];
            out = alpha * s + (beta == 0.0 ? 0.0 : beta * out);
        }
}

void conv2d_forward(const ConvGeom& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = bias.empty() ? 0.0 : bias[co];
                for (int ci = 0; ci < g.cin; ++ci)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky;
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                            s += weight[((static_cast<long>(co) * g.cin + ci) * g.k + ky) * g.k + kx] *
                                 x[(static_cast<long>(ci) * g.h + iy) * g.w + ix];
                        }
                y[(static_cast<long>(co) * oh + oy) * ow + ox] = s;
            }
}

void conv2d_backward_input(const ConvGeom& g, std::span<const double> dy, std::span<const double> weight,
                           std::span<double> dx) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double d = dy[(static_cast<long>(co) * oh + oy) * ow + ox];
                for (int ci = 0; ci < g.cin; ++ci)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky;
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                            dx[(static_cast<long>(ci) * g.h + iy) * g.w + ix] +=
                                d * weight[((static_cast<long>(co) * g.cin + ci) * g.k + ky) * g.k + kx];
                        }
            }
}

void conv2d_backward_weight(const ConvGeom& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db) {
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double d = dy[(static_cast<long>(co) * oh + oy) * ow + ox];
                if (!db.empty()) db[co] += d;
                for (int ci = 0; ci < g.cin; ++ci)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            const int iy = oy * g.stride - g.pad + ky;
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                            dw[((static_cast<long>(co) * g.cin + ci) * g.k + ky) * g.k + kx] +=
                                d * x[(static_cast<long>(ci) * g.h + iy) * g.w + ix];
                        }
            }
}

void attention_forward(int nq, int nk, int c, int cv, double scale, int kv_len, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v, std::span<double> p,
                       std::span<double> o) {
    for (int i = 0; i < nq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < kv_len; ++j) {
            double s = 0.0;
            for (int e = 0; e < c; ++e) s += q[static_cast<long>(i) * c + e] * k[static_cast<long>(j) * c + e];
            p[static_cast<long>(i) * nk + j] = scale * s;
            mx = std::max(mx, scale * s);
        }
        double z = 0.0;
        for (int j = 0; j < kv_len; ++j) z += std::exp(p[static_cast<long>(i) * nk + j] - mx);
        for (int j = 0; j < nk; ++j)
            p[static_cast<long>(i) * nk + j] = j < kv_len ? std::exp(p[static_cast<long>(i) * nk + j] - mx) / z : 0.0;
        for (int e = 0; e < cv; ++e) {
            double s = 0.0;
            for (int j = 0; j < nk; ++j) s += p[static_cast<long>(i) * nk + j] * v[static_cast<long>(j) * cv + e];
            o[static_cast<long>(i) * cv + e] = s;
        }
    }
}

}  // namespace sdsr::kernels::ref
