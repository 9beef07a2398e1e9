#include "sdsr/tascata.hpp"

namespace sdsr {

TascataParams make_tascata(nn::ParamStore& store, const std::string& prefix, int channels, int time_dim, double tau,
                           Rng& rng) {
    if (!(tau > 0.0)) throw RangeError("tascata: temperature must be positive");
    TascataParams p;
    p.query_key_left = nn::make_linear(store, prefix + ".w1_left", channels, channels, rng, false);
    p.query_key_right = nn::make_linear(store, prefix + ".w1_right", channels, channels, rng, false);
    p.value_left = nn::make_linear(store, prefix + ".w2_left", channels, channels, rng, false);
    p.value_right = nn::make_linear(store, prefix + ".w2_right", channels, channels, rng, false);
    p.time_proj = nn::make_linear(store, prefix + ".wv", time_dim, channels, rng);
    p.gc1 = nn::make_gc_block(store, prefix + ".gc1", channels, channels, rng);
    p.gc2 = nn::make_gc_block(store, prefix + ".gc2", channels, channels, rng);
    p.gc3 = nn::make_gc_block(store, prefix + ".gc3", channels, channels, rng);
    p.gamma_left = store.add(prefix + ".gamma_left", Tensor({1}));
    p.gamma_right = store.add(prefix + ".gamma_right", Tensor({1}));
    p.tau = store.add(prefix + ".tau", Tensor({1}, tau), false);
    return p;
}

Var temperature_attention(const Var& q, const Var& k, const Var& v, const Var& tau) {
    if (q.value().ndim() == 2) {
        auto lift = [](const Var& x) { return ag::reshape(x, {1, x.dim(0), x.dim(1)}); };
        Var out = ag::attention(lift(q), lift(k), lift(v), tau);
        return ag::reshape(out, {out.dim(1), out.dim(2)});
    }
    return ag::attention(q, k, v, tau);
}

Tensor temperature_attention(const Tensor& q, const Tensor& k, const Tensor& v, double tau) {
    ag::NoGradGuard guard;
    return temperature_attention(ag::constant(q), ag::constant(k), ag::constant(v), ag::constant(Tensor({1}, tau)))
        .value();
}

Var tasca(const Var& z_left, const Var& z_right, const Var& v_t, const TascataParams& p, Direction dir) {
    require_same_shape(z_left.value(), z_right.value(), "tasca");
    const bool to_left = dir == Direction::right_to_left;
    const Var& dst = to_left ? z_left : z_right;
    const Var& src = to_left ? z_right : z_left;
    const nn::Linear& w1_dst = to_left ? p.query_key_left : p.query_key_right;
    const nn::Linear& w1_src = to_left ? p.query_key_right : p.query_key_left;
    const nn::Linear& w2_src = to_left ? p.value_right : p.value_left;

    const int h = dst.dim(2), w = dst.dim(3);
    Var dst_tokens = ag::to_tokens(dst);
    Var src_tokens = ag::to_tokens(src);
    Var q = w1_dst(ag::layer_norm(dst_tokens));
    Var k = w1_src(ag::layer_norm(src_tokens));
    Var v = w2_src(src_tokens);
    Var attended = ag::from_tokens(ag::attention(q, k, v, p.tau), h, w);

    Var timed = ag::add_channel_vector(p.gc1(attended), p.time_proj(v_t));
    return ag::add(p.gc2(timed), p.gc3(attended));
}

std::pair<Var, Var> fuse_views(const Var& z_left, const Var& z_right, const Var& v_t, const TascataParams& p) {
    Var r2l = tasca(z_left, z_right, v_t, p, Direction::right_to_left);
    Var l2r = tasca(z_left, z_right, v_t, p, Direction::left_to_right);
    return {ag::add(ag::mul_scalar(r2l, p.gamma_left), z_left), ag::add(ag::mul_scalar(l2r, p.gamma_right), z_right)};
}

}  // namespace sdsr
