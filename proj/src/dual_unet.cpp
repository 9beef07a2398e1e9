#include "sdsr/dual_unet.hpp"

#include <algorithm>
#include <cmath>

namespace sdsr {

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

Var halves_concat(const Var& a, const Var& b) { return ag::concat({a, b}, 0); }

}  // namespace

void DualUNetConfig::validate() const {
    if (levels() < 2) throw std::invalid_argument("unet: need at least two resolution levels");
    if (latent_channels < 1 || base_channels < 1 || time_dim < 2 || time_dim % 2 || context_dim < 1)
        throw std::invalid_argument("unet: channel/time/context sizes must be positive (time_dim even)");
    for (int m : channel_mults)
        if (m < 1) throw std::invalid_argument("unet: channel multipliers must be positive");
    for (const auto* lv : {&attn_levels, &tascata_levels})
        for (int l : *lv)
            if (l < 0 || l >= levels()) throw std::invalid_argument("unet: level index out of range");
    if (!(tau > 0.0)) throw RangeError("unet: tascata temperature must be positive");
}

Tensor sinusoid(const std::vector<int>& t, int dim) {
    const int half = dim / 2;
    Tensor out({static_cast<int>(t.size()), dim});
    for (std::size_t b = 0; b < t.size(); ++b)
        for (int i = 0; i < half; ++i) {
            const double f = std::exp(-std::log(10000.0) * i / half);
            out[b * dim + 2 * i] = std::sin(t[b] * f);
            out[b * dim + 2 * i + 1] = std::cos(t[b] * f);
        }
    return out;
}

Var PromptAttention::operator()(const Var& x, const Var& context, const std::vector<int>& kv_len) const {
    const int h = x.dim(2), w = x.dim(3);
    Var tokens = ag::to_tokens(x);
    Var attended = ag::attention(q(ag::layer_norm(tokens)), k(context), v(context), tau, kv_len);
    return ag::add(x, ag::from_tokens(out(attended), h, w));
}

PromptAttention make_prompt_attention(nn::ParamStore& s, const std::string& name, int channels, int context_dim,
                                      Rng& rng) {
    PromptAttention a;
    a.q = nn::make_linear(s, name + ".q", channels, channels, rng, false);
    a.k = nn::make_linear(s, name + ".k", context_dim, channels, rng, false);
    a.v = nn::make_linear(s, name + ".v", context_dim, channels, rng, false);
    a.out = nn::make_linear(s, name + ".out", channels, channels, rng);
    a.tau = ag::constant(Tensor({1}, 1.0));
    return a;
}

StackedContext stack_context(const PromptBundle& p) {
    if (p.soft_left.ndim() != 3 || p.hard_left.ndim() != 3)
        throw ShapeError("prompt bundle must hold [B,L,D] tensors");
    require_same_shape(p.soft_left, p.soft_right, "soft prompts");
    require_same_shape(p.hard_left, p.hard_right, "hard prompts");
    const int b = p.batch(), ls = p.soft_left.dim(1);
    if (static_cast<int>(p.hard_len_left.size()) != b || static_cast<int>(p.hard_len_right.size()) != b)
        throw ShapeError("prompt bundle: hard_len must have one entry per item");
    StackedContext ctx;
    Var left = ag::concat({ag::constant(p.soft_left), ag::constant(p.hard_left)}, 1);
    Var right = ag::concat({ag::constant(p.soft_right), ag::constant(p.hard_right)}, 1);
    ctx.tokens = halves_concat(left, right);
    for (int l : p.hard_len_left) ctx.kv_len.push_back(ls + l);
    for (int l : p.hard_len_right) ctx.kv_len.push_back(ls + l);
    return ctx;
}

Var fuse_stacked(const Var& h, const Var& temb, const TascataParams& p) {
    const int b = h.dim(0) / 2;
    auto [l, r] = fuse_views(ag::slice(h, 0, 0, b), ag::slice(h, 0, b, b), ag::slice(temb, 0, 0, b), p);
    return halves_concat(l, r);
}

Var EncoderStack::time_embed(const std::vector<int>& t, int time_dim) const {
    return time2(ag::silu(time1(ag::constant(sinusoid(t, time_dim)))));
}

std::vector<Var> EncoderStack::run(Var h, const Var& temb, const StackedContext& ctx, std::vector<Var>* bottom) const {
    std::vector<Var> skips;
    for (const EncoderLevel& lv : levels) {
        h = lv.res(h, temb);
        if (lv.attn) h = (*lv.attn)(h, ctx.tokens, ctx.kv_len);
        if (lv.fuse) h = fuse_stacked(h, temb, *lv.fuse);
        skips.push_back(h);
        if (lv.down) h = (*lv.down)(h);
    }
    if (bottom) bottom->push_back(h);
    return skips;
}

EncoderStack make_encoder(nn::ParamStore& s, const std::string& prefix, const DualUNetConfig& cfg, Rng& rng) {
    EncoderStack e;
    e.time1 = nn::make_linear(s, prefix + ".time.0", cfg.time_dim, cfg.time_dim, rng);
    e.time2 = nn::make_linear(s, prefix + ".time.1", cfg.time_dim, cfg.time_dim, rng);
    e.conv_in = nn::make_conv(s, prefix + ".conv_in", cfg.latent_channels, cfg.channels(0), 3, 1, rng);
    int cin = cfg.channels(0);
    for (int l = 0; l < cfg.levels(); ++l) {
        const std::string n = prefix + ".down." + std::to_string(l);
        const int c = cfg.channels(l);
        EncoderLevel lv;
        lv.res = nn::make_res_block(s, n + ".res", cin, c, cfg.time_dim, rng);
        if (contains(cfg.attn_levels, l)) lv.attn = make_prompt_attention(s, n + ".attn", c, cfg.context_dim, rng);
        if (contains(cfg.tascata_levels, l)) lv.fuse = make_tascata(s, n + ".tascata", c, cfg.time_dim, cfg.tau, rng);
        if (l + 1 < cfg.levels()) lv.down = nn::make_conv(s, n + ".downsample", c, c, 3, 2, rng);
        e.levels.push_back(std::move(lv));
        cin = c;
    }
    return e;
}

DualUNet::DualUNet(const DualUNetConfig& cfg, nn::ParamStore& store, Rng& rng, const std::string& prefix)
    : m_cfg(cfg) {
    cfg.validate();
    m_enc = make_encoder(store, prefix, cfg, rng);
    const int top = cfg.levels() - 1;
    m_mid = nn::make_res_block(store, prefix + ".mid", cfg.channels(top), cfg.channels(top), cfg.time_dim, rng);
    int cin = cfg.channels(top);
    for (int l = top; l >= 0; --l) {
        const std::string n = prefix + ".up." + std::to_string(l);
        const int c = cfg.channels(l);
        DecoderLevel lv;
        lv.res = nn::make_res_block(store, n + ".res", cin + c, c, cfg.time_dim, rng);
        if (contains(cfg.attn_levels, l)) lv.attn = make_prompt_attention(store, n + ".attn", c, cfg.context_dim, rng);
        if (contains(cfg.tascata_levels, l))
            lv.fuse = make_tascata(store, n + ".tascata", c, cfg.time_dim, cfg.tau, rng);
        if (l > 0) lv.up = nn::make_conv(store, n + ".upsample", c, c, 3, 1, rng);
        m_dec.push_back(std::move(lv));
        cin = c;
    }
    m_out_norm = nn::make_group_norm(store, prefix + ".out_norm", cfg.channels(0));
    m_out = nn::make_conv(store, prefix + ".conv_out", cfg.channels(0), cfg.latent_channels, 3, 1, rng);
}

Var DualUNet::time_embed(const std::vector<int>& t) const {
    for (int s : t)
        if (s < 0 || s >= m_cfg.T) throw RangeError("time_embed: step " + std::to_string(s) + " outside [0, T)");
    return m_enc.time_embed(t, m_cfg.time_dim);
}

std::vector<Shape> DualUNet::control_shapes(int n, int h, int w) const {
    std::vector<Shape> out;
    for (int l = 0; l < m_cfg.levels(); ++l) out.push_back({n, m_cfg.channels(l), h >> l, w >> l});
    return out;
}

Var DualUNet::run(const Var& z, const std::vector<int>& t, const StackedContext& ctx,
                  const std::vector<Var>* controls) const {
    const int h = z.dim(2), w = z.dim(3);
    const int div = 1 << (m_cfg.levels() - 1);
    if (z.value().ndim() != 4 || z.dim(1) != m_cfg.latent_channels || h % div || w % div)
        throw ShapeError("unet: latent " + shape_str(z.shape()) + " does not fit the configuration");
    if (ctx.tokens.dim(0) != z.dim(0) || ctx.tokens.dim(2) != m_cfg.context_dim)
        throw ShapeError("unet: prompt context " + shape_str(ctx.tokens.shape()) + " does not match latents");
    if (controls) {
        const auto shapes = control_shapes(z.dim(0), h, w);
        if (controls->size() != shapes.size()) throw ShapeError("unet: control scale count mismatch");
        for (std::size_t i = 0; i < shapes.size(); ++i)
            if ((*controls)[i].shape() != shapes[i])
                throw ShapeError("unet: control feature " + shape_str((*controls)[i].shape()) + " expected " +
                                 shape_str(shapes[i]));
    }
    Var temb = time_embed(t);
    std::vector<Var> bottom;
    std::vector<Var> skips = m_enc.run(m_enc.conv_in(z), temb, ctx, &bottom);
    Var x = m_mid(bottom.front(), temb);
    for (const DecoderLevel& lv : m_dec) {
        const std::size_t l = skips.size() - 1;
        Var skip = skips.back();
        skips.pop_back();
        if (controls) skip = ag::add(skip, (*controls)[l]);
        x = lv.res(ag::concat({x, skip}, 1), temb);
        if (lv.attn) x = (*lv.attn)(x, ctx.tokens, ctx.kv_len);
        if (lv.fuse) x = fuse_stacked(x, temb, *lv.fuse);
        if (lv.up) x = (*lv.up)(ag::upsample_nearest(x, 2));
    }
    return m_out(ag::silu(m_out_norm(x)));
}

std::pair<Var, Var> DualUNet::forward(const Var& z_left, const Var& z_right, const std::vector<int>& t,
                                      const PromptBundle& prompts, const std::vector<Var>* controls) const {
    require_same_shape(z_left.value(), z_right.value(), "dual unet views");
    const int b = z_left.dim(0);
    if (static_cast<int>(t.size()) != b) throw ShapeError("unet: need one time step per item");
    if (prompts.batch() != b) throw ShapeError("unet: prompt batch does not match latents");
    std::vector<int> tt(t);
    tt.insert(tt.end(), t.begin(), t.end());
    Var out = run(halves_concat(z_left, z_right), tt, stack_context(prompts), controls);
    return {ag::slice(out, 0, 0, b), ag::slice(out, 0, b, b)};
}

LatentPair DualUNet::forward(const LatentPair& z, int t, const PromptBundle& prompts,
                             const std::vector<Var>* controls) const {
    ag::NoGradGuard guard;
    const bool single = z.left.ndim() == 3;
    auto lift = [](const Tensor& x) { return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}); };
    Tensor l = single ? lift(z.left) : z.left;
    Tensor r = single ? lift(z.right) : z.right;
    auto [pl, pr] = forward(ag::constant(l), ag::constant(r), std::vector<int>(static_cast<std::size_t>(l.dim(0)), t),
                            prompts, controls);
    if (single) return {pl.value().reshaped(z.left.shape()), pr.value().reshaped(z.right.shape())};
    return {pl.value(), pr.value()};
}

Var DualUNet::forward_view(const Var& z, const std::vector<int>& t, const Tensor& soft, const Tensor& hard,
                           const std::vector<int>& hard_len, const std::vector<Var>* controls) const {
    if (fusion_enabled()) throw std::logic_error("forward_view: views are coupled while TASCATA is enabled");
    StackedContext ctx;
    ctx.tokens = ag::concat({ag::constant(soft), ag::constant(hard)}, 1);
    for (int l : hard_len) ctx.kv_len.push_back(soft.dim(1) + l);
    return run(z, t, ctx, controls);
}

}  // namespace sdsr
