#include <doctest.h>

#include <cmath>

#include "sdsr/tascata.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace sdsr;
using sdsr::testing::brute_attention;
using sdsr::testing::grad_check;
using sdsr::testing::random_tensor;

namespace {

struct Block {
    nn::ParamStore store;
    TascataParams p;
    explicit Block(int c = 8, int time_dim = 6, std::uint64_t seed = 1) {
        Rng rng(seed);
        p = make_tascata(store, "t", c, time_dim, 1.0, rng);
    }
};

}  // namespace

TEST_CASE("temperature attention matches a brute-force oracle") {
    for (int trial = 0; trial < 4; ++trial) {
        const int nq = 3 + trial * 4, nk = 16 - trial * 3, c = 4 + trial;
        const Tensor q = random_tensor({nq, c}, 10 + trial), k = random_tensor({nk, c}, 20 + trial),
                     v = random_tensor({nk, 3}, 30 + trial);
        for (double tau : {0.25, 1.0, 3.0})
            CHECK(max_abs_diff(temperature_attention(q, k, v, tau), brute_attention(q, k, v, tau)) < 1e-6);
    }
}

TEST_CASE("attention weights are a row-stochastic matrix") {
    const Tensor q = random_tensor({6, 4}, 1), k = random_tensor({9, 4}, 2);
    Tensor eye({9, 9});
    for (int i = 0; i < 9; ++i) eye[i * 9 + i] = 1.0;
    const Tensor p = temperature_attention(q, k, eye, 1.7);
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int j = 0; j < 9; ++j) {
            CHECK(p[i * 9 + j] >= 0.0);
            s += p[i * 9 + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("temperature limits: uniform as tau goes to zero, argmax at tau 100") {
    const Tensor q = random_tensor({5, 4}, 3), k = random_tensor({7, 4}, 4);
    Tensor eye({7, 7});
    for (int i = 0; i < 7; ++i) eye[i * 7 + i] = 1.0;
    const Tensor flat = temperature_attention(q, k, eye, 1e-9);
    for (std::size_t i = 0; i < flat.numel(); ++i) CHECK(std::abs(flat[i] - 1.0 / 7.0) < 1e-3);
    // Score gaps of at least 0.3 so the argmax is unambiguous; queries alternate
    // the sign of their first component so both ends of the key range win.
    Tensor q2 = q, k2({7, 4});
    for (int i = 0; i < 5; ++i) q2[i * 4] = i % 2 ? -1.0 : 1.0;
    for (int j = 0; j < 7; ++j) k2[j * 4] = 0.3 * j;
    const Tensor sharp = temperature_attention(q2, k2, eye, 100.0);
    for (int i = 0; i < 5; ++i) {
        int best = 0;
        double best_s = -1e300;
        for (int j = 0; j < 7; ++j) {
            double s = 0.0;
            for (int d = 0; d < 4; ++d) s += q2[i * 4 + d] * k2[j * 4 + d];
            if (s > best_s) best_s = s, best = j;
        }
        for (int j = 0; j < 7; ++j) CHECK(std::abs(sharp[i * 7 + j] - (j == best ? 1.0 : 0.0)) < 1e-3);
    }
}

TEST_CASE("zero gains make the fusion an exact pass-through") {
    Block b;
    const ag::Var zl = ag::constant(random_tensor({2, 8, 4, 4}, 5)), zr = ag::constant(random_tensor({2, 8, 4, 4}, 6));
    const ag::Var vt = ag::constant(random_tensor({2, 6}, 7));
    const auto [ol, orr] = fuse_views(zl, zr, vt, b.p);
    CHECK(max_abs_diff(ol.value(), zl.value()) == 0.0);
    CHECK(max_abs_diff(orr.value(), zr.value()) == 0.0);
}

TEST_CASE("fusion with mirrored weights is swap-equivariant") {
    Block b;
    b.p.gamma_left.mutable_value()[0] = 0.7;
    b.p.gamma_right.mutable_value()[0] = 0.7;
    b.p.query_key_right.weight.mutable_value() = b.p.query_key_left.weight.value();
    b.p.value_right.weight.mutable_value() = b.p.value_left.weight.value();
    const ag::Var zl = ag::constant(random_tensor({1, 8, 4, 4}, 8)), zr = ag::constant(random_tensor({1, 8, 4, 4}, 9));
    const ag::Var vt = ag::constant(random_tensor({1, 6}, 10));
    const auto [al, ar] = fuse_views(zl, zr, vt, b.p);
    const auto [bl, br] = fuse_views(zr, zl, vt, b.p);
    CHECK(max_abs_diff(al.value(), br.value()) < 1e-12);
    CHECK(max_abs_diff(ar.value(), bl.value()) < 1e-12);
    CHECK(max_abs_diff(al.value(), zl.value()) > 1e-3);
}

TEST_CASE("fuse_views gradients match central differences") {
    Block b(4, 3, 2);
    b.p.gamma_left.mutable_value()[0] = 0.6;
    b.p.gamma_right.mutable_value()[0] = -0.4;
    ag::Var zl(random_tensor({1, 4, 3, 3}, 11), true), zr(random_tensor({1, 4, 3, 3}, 12), true);
    ag::Var vt(random_tensor({1, 3}, 13), true);
    const Tensor wl = random_tensor({1, 4, 3, 3}, 14), wr = random_tensor({1, 4, 3, 3}, 15);
    auto loss = [&] {
        const auto [l, r] = fuse_views(zl, zr, vt, b.p);
        return ag::add(ag::sum_all(ag::mul(l, ag::constant(wl))), ag::sum_all(ag::mul(r, ag::constant(wr))));
    };
    std::vector<ag::Var> inputs{zl, zr, vt};
    for (const auto& e : b.store.trainable()) inputs.push_back(e.second);
    CHECK(grad_check(loss, inputs, 0, 1e-5, 1e-8) < 1e-4);
}

TEST_CASE("tascata rejects mismatched views and bad temperatures") {
    Block b;
    const ag::Var zl = ag::constant(random_tensor({1, 8, 4, 4}, 1)), zr = ag::constant(random_tensor({1, 8, 4, 2}, 2));
    CHECK_THROWS_AS(fuse_views(zl, zr, ag::constant(Tensor({1, 6})), b.p), ShapeError);
    nn::ParamStore s;
    Rng rng(1);
    CHECK_THROWS_AS(make_tascata(s, "x", 4, 4, 0.0, rng), RangeError);
}

TEST_CASE("temperature is stored but not trainable") {
    Block b;
    CHECK_FALSE(b.store.get("t.tau").requires_grad());
    CHECK(b.store.get("t.gamma_left").requires_grad());
}
