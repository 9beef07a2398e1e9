// OpenMP kernels against their serial references on shapes the models hit.
// Run with OMP_NUM_THREADS set to compare scaling on a multi-core machine.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sdsr/kernels.hpp"

namespace k = sdsr::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

template <bool Omp>
void bm_gemm(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0));
    const bool ta = st.range(1) & 1, tb = st.range(1) & 2;
    auto a = filled(std::size_t(n) * n, 1), b = filled(std::size_t(n) * n, 2);
    std::vector<double> c(std::size_t(n) * n);
    for (auto _ : st) {
        if constexpr (Omp)
            k::gemm(ta, tb, n, n, n, 1.0, a, b, 0.0, c);
        else
            k::ref::gemm(ta, tb, n, n, n, 1.0, a, b, 0.0, c);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * n * n * n);
}

k::ConvGeom conv_geom(const benchmark::State& st) {
    k::ConvGeom g;
    g.cin = g.cout = static_cast<int>(st.range(0));
    g.h = g.w = static_cast<int>(st.range(1));
    g.k = 3;
    g.pad = 1;
    return g;
}

template <bool Omp>
void bm_conv_fwd(benchmark::State& st) {
    const k::ConvGeom g = conv_geom(st);
    auto x = filled(std::size_t(g.cin) * g.h * g.w, 3), w = filled(std::size_t(g.cout) * g.col_rows(), 4);
    auto bias = filled(std::size_t(g.cout), 5);
    std::vector<double> y(std::size_t(g.cout) * g.col_cols());
    for (auto _ : st) {
        if constexpr (Omp)
            k::conv2d_forward(g, x, w, bias, y);
        else
            k::ref::conv2d_forward(g, x, w, bias, y);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * 2LL * g.cout * g.col_rows() * g.col_cols());
}

template <bool Omp>
void bm_conv_bwd(benchmark::State& st) {
    const k::ConvGeom g = conv_geom(st);
    auto x = filled(std::size_t(g.cin) * g.h * g.w, 6), w = filled(std::size_t(g.cout) * g.col_rows(), 7);
    auto dy = filled(std::size_t(g.cout) * g.col_cols(), 8);
    std::vector<double> dx(x.size()), dw(w.size()), db(std::size_t(g.cout));
    for (auto _ : st) {
        if constexpr (Omp) {
            k::conv2d_backward_input(g, dy, w, dx);
            k::conv2d_backward_weight(g, x, dy, dw, db);
        } else {
            k::ref::conv2d_backward_input(g, dy, w, dx);
            k::ref::conv2d_backward_weight(g, x, dy, dw, db);
        }
        benchmark::DoNotOptimize(dx.data());
        benchmark::DoNotOptimize(dw.data());
    }
    st.SetItemsProcessed(st.iterations() * 4LL * g.cout * g.col_rows() * g.col_cols());
}

template <bool Omp>
void bm_attention(benchmark::State& st) {
    const int n = static_cast<int>(st.range(0)), c = static_cast<int>(st.range(1));
    auto q = filled(std::size_t(n) * c, 9), kk = filled(std::size_t(n) * c, 10), v = filled(std::size_t(n) * c, 11);
    std::vector<double> p(std::size_t(n) * n), o(std::size_t(n) * c);
    for (auto _ : st) {
        if constexpr (Omp)
            k::attention_forward(n, n, c, c, 0.125, n, q, kk, v, p, o);
        else
            k::ref::attention_forward(n, n, c, c, 0.125, n, q, kk, v, p, o);
        benchmark::DoNotOptimize(o.data());
    }
    st.SetItemsProcessed(st.iterations() * 4LL * n * n * c);
}

void gemm_args(benchmark::internal::Benchmark* b) {
    for (int n : {64, 256})
        for (int t : {0, 1, 2}) b->Args({n, t});
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({16, 64})->Args({32, 32})->Args({64, 16});
}

void attn_args(benchmark::internal::Benchmark* b) { b->Args({256, 32})->Args({512, 64}); }

}  // namespace

BENCHMARK(bm_gemm<false>)->Name("gemm/ref")->Apply(gemm_args);
BENCHMARK(bm_gemm<true>)->Name("gemm/omp")->Apply(gemm_args);
BENCHMARK(bm_conv_fwd<false>)->Name("conv_fwd/ref")->Apply(conv_args);
BENCHMARK(bm_conv_fwd<true>)->Name("conv_fwd/omp")->Apply(conv_args);
BENCHMARK(bm_conv_bwd<false>)->Name("conv_bwd/ref")->Apply(conv_args);
BENCHMARK(bm_conv_bwd<true>)->Name("conv_bwd/omp")->Apply(conv_args);
BENCHMARK(bm_attention<false>)->Name("attention/ref")->Apply(attn_args);
BENCHMARK(bm_attention<true>)->Name("attention/omp")->Apply(attn_args);

BENCHMARK_MAIN();
