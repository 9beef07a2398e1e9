#include "sdsr/soa_controlnet.hpp"

#include <algorithm>
#include <numeric>

namespace sdsr {

ScatmParams make_scatm(nn::ParamStore& s, const std::string& prefix, int channels, Rng& rng) {
    ScatmParams p;
    p.query_key_left = nn::make_linear(s, prefix + ".w1_left", channels, channels, rng, false);
    p.query_key_right = nn::make_linear(s, prefix + ".w1_right", channels, channels, rng, false);
    p.value_left = nn::make_linear(s, prefix + ".w2_left", channels, channels, rng, false);
    p.value_right = nn::make_linear(s, prefix + ".w2_right", channels, channels, rng, false);
    p.gc1 = nn::make_gc_block(s, prefix + ".gc1", channels, channels, rng);
    p.gc2 = nn::make_gc_block(s, prefix + ".gc2", channels, channels, rng);
    p.gc3 = nn::make_gc_block(s, prefix + ".gc3", channels, channels, rng);
    p.gamma_left = s.add(prefix + ".gamma_left", Tensor({1}));
    p.gamma_right = s.add(prefix + ".gamma_right", Tensor({1}));
    p.tau = ag::constant(Tensor({1}, 1.0));
    return p;
}

Var scatm_term(const Var& z_left, const Var& z_right, const ScatmParams& p, Direction dir) {
    require_same_shape(z_left.value(), z_right.value(), "scatm");
    const bool to_left = dir == Direction::right_to_left;
    const Var& dst = to_left ? z_left : z_right;
    const Var& src = to_left ? z_right : z_left;
    const nn::Linear& w1_dst = to_left ? p.query_key_left : p.query_key_right;
    const nn::Linear& w1_src = to_left ? p.query_key_right : p.query_key_left;
    const nn::Linear& w2_src = to_left ? p.value_right : p.value_left;
    Var src_tokens = ag::to_tokens(src);
    Var q = w1_dst(ag::layer_norm(ag::to_tokens(dst)));
    Var k = w1_src(ag::layer_norm(src_tokens));
    Var attended = ag::from_tokens(ag::attention(q, k, w2_src(src_tokens), p.tau), dst.dim(2), dst.dim(3));
    return ag::add(p.gc2(p.gc1(attended)), p.gc3(attended));
}

std::pair<Var, Var> scatm(const Var& z_left, const Var& z_right, const ScatmParams& p) {
    Var r2l = scatm_term(z_left, z_right, p, Direction::right_to_left);
    Var l2r = scatm_term(z_left, z_right, p, Direction::left_to_right);
    return {ag::add(ag::mul_scalar(r2l, p.gamma_left), z_left), ag::add(ag::mul_scalar(l2r, p.gamma_right), z_right)};
}

Var scatm_stacked(const Var& h, const ScatmParams& p) {
    const int b = h.dim(0) / 2;
    auto [l, r] = scatm(ag::slice(h, 0, 0, b), ag::slice(h, 0, b, b), p);
    return ag::concat({l, r}, 0);
}

std::string to_string(SoanLoss m) { return m == SoanLoss::l1 ? "l1" : "adversarial"; }

SoanLoss soan_loss_from_string(const std::string& s) {
    if (s == "l1" || s == "L1") return SoanLoss::l1;
    if (s == "adv" || s == "adversarial") return SoanLoss::adversarial;
    throw std::invalid_argument("unknown SOAN loss mode: " + s);
}

Tensor bicubic_upsample(const Tensor& batch, int scale) {
    const int b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    std::vector<Tensor> parts;
    for (int i = 0; i < b; ++i) {
        Tensor up = resize(batch.slice0(i, 1).reshaped({c, h, w}), h * scale, w * scale, Interp::bicubic);
        parts.push_back(up.reshaped({1, c, h * scale, w * scale}));
    }
    return Tensor::concat0(parts);
}

Soan::Soan(const SoanConfig& cfg, nn::ParamStore& s, Rng& rng) : m_cfg(cfg) {
    if (cfg.channels < 4 || cfg.groups < 1 || cfg.scale < 1 || cfg.lr_size % cfg.window || cfg.lr_size % 2)
        throw std::invalid_argument("soan: invalid configuration");
    const int c = cfg.channels, r = std::max(4, c / 4);
    m_head = nn::make_conv(s, "soan.head", 3, c, 3, 1, rng);
    for (int i = 0; i < cfg.groups; ++i) {
        const std::string n = "soan.group." + std::to_string(i);
        Group g;
        g.lcb1 = nn::make_conv(s, n + ".lcb.0", c, c, 3, 1, rng);
        g.lcb2 = nn::make_conv(s, n + ".lcb.1", c, c, 3, 1, rng);
        g.meso_qkv = nn::make_linear(s, n + ".meso.qkv", c, 3 * c, rng, false);
        g.meso_out = nn::make_linear(s, n + ".meso.out", c, c, rng);
        g.global_qkv = nn::make_linear(s, n + ".global.qkv", c, 3 * c, rng, false);
        g.global_out = nn::make_linear(s, n + ".global.out", c, c, rng);
        g.esa_reduce = nn::make_conv(s, n + ".esa.reduce", c, r, 1, 1, rng);
        g.esa_down = nn::make_conv(s, n + ".esa.down", r, r, 3, 2, rng);
        g.esa_mid = nn::make_conv(s, n + ".esa.mid", r, r, 3, 1, rng);
        g.esa_expand = nn::make_conv(s, n + ".esa.expand", r, c, 1, 1, rng);
        g.fuse = make_scatm(s, n + ".scatm", c, rng);
        g.conv = nn::make_conv(s, n + ".conv", c, c, 3, 1, rng);
        m_groups.push_back(std::move(g));
    }
    m_body = nn::make_conv(s, "soan.body", c, c, 3, 1, rng);
    // Zero tail: training starts from plain bicubic upsampling.
    m_tail = nn::make_conv(s, "soan.tail", c, 3 * cfg.scale * cfg.scale, 3, 1, rng, true);
    m_one = ag::constant(Tensor({1}, 1.0));
}

Var Soan::self_attention(const Var& x, const nn::Linear& qkv, const nn::Linear& out, int window) const {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Var t = window > 0 ? ag::window_partition(x, window) : ag::to_tokens(x);
    Var proj = qkv(ag::layer_norm(t));
    Var a = ag::attention(ag::slice(proj, 2, 0, c), ag::slice(proj, 2, c, c), ag::slice(proj, 2, 2 * c, c), m_one);
    Var o = out(a);
    return ag::add(x, window > 0 ? ag::window_merge(o, n, c, h, w, window) : ag::from_tokens(o, h, w));
}

Var Soan::esa(const Var& x, const Group& g) const {
    Var c1 = g.esa_reduce(x);
    Var m = ag::silu(g.esa_mid(g.esa_down(c1)));
    Var a = ag::sigmoid(g.esa_expand(ag::add(ag::upsample_nearest(m, 2), c1)));
    return ag::mul(x, a);
}

Var Soan::group(const Var& x, const Group& g) const {
    Var h = ag::add(x, g.lcb2(ag::silu(g.lcb1(x))));
    h = self_attention(h, g.meso_qkv, g.meso_out, m_cfg.window);
    h = self_attention(h, g.global_qkv, g.global_out, 0);
    h = esa(h, g);
    h = scatm_stacked(h, g.fuse);
    return ag::add(x, g.conv(h));
}

std::pair<Var, Var> Soan::forward(const Var& lr_left, const Var& lr_right) const {
    require_same_shape(lr_left.value(), lr_right.value(), "soan views");
    if (lr_left.value().ndim() != 4 || lr_left.dim(1) != 3 || lr_left.dim(2) != m_cfg.lr_size ||
        lr_left.dim(3) != m_cfg.lr_size)
        throw ShapeError("soan: expected [B,3," + std::to_string(m_cfg.lr_size) + "," + std::to_string(m_cfg.lr_size) +
                         "] input, got " + shape_str(lr_left.shape()));
    const int b = lr_left.dim(0);
    Var x = ag::concat({lr_left, lr_right}, 0);
    Var f0 = m_head(x);
    Var f = f0;
    for (const Group& g : m_groups) f = group(f, g);
    f = ag::add(f0, m_body(f));
    Var up = ag::pixel_shuffle(m_tail(f), m_cfg.scale);
    Var out = ag::add(up, ag::constant(bicubic_upsample(x.value(), m_cfg.scale)));
    return {ag::slice(out, 0, 0, b), ag::slice(out, 0, b, b)};
}

StereoImagePair Soan::restore(const StereoImagePair& lr) const {
    ag::NoGradGuard guard;
    const bool single = lr.left.ndim() == 3;
    auto lift = [](const Tensor& x) { return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}); };
    auto [l, r] = forward(ag::constant(single ? lift(lr.left) : lr.left), ag::constant(single ? lift(lr.right) : lr.right));
    StereoImagePair out{l.value(), r.value()};
    for (Tensor* t : {&out.left, &out.right}) {
        for (double& v : t->vec()) v = std::clamp(v, 0.0, 1.0);
        if (single) *t = t->reshaped({t->dim(1), t->dim(2), t->dim(3)});
    }
    return out;
}

namespace {

Tensor stack_views(const std::vector<StereoSample>& data, const std::vector<std::size_t>& idx, bool hr, bool left) {
    std::vector<Tensor> parts;
    for (std::size_t i : idx) {
        const StereoImagePair& p = hr ? data[i].hr : data[i].lr;
        const Tensor& t = left ? p.left : p.right;
        parts.push_back(t.reshaped({1, t.dim(0), t.dim(1), t.dim(2)}));
    }
    return Tensor::concat0(parts);
}

struct PatchDiscriminator {
    nn::Conv2d c1, c2, c3;
    Var operator()(const Var& x) const {
        Var h = ag::leaky_relu(c1(x), 0.2);
        h = ag::leaky_relu(c2(h), 0.2);
        return c3(h);
    }
};

}  // namespace

TrainHistory soan_pretrain(Soan& soan, const nn::ParamStore& store, const std::vector<StereoSample>& data,
                           const SoanTrainOptions& opt) {
    if (data.empty()) throw std::invalid_argument("soan_pretrain: empty dataset");
    if (opt.batch < 1 || !(opt.lr > 0.0) || opt.epochs < 0) throw RangeError("soan_pretrain: invalid options");
    soan.loss_mode = opt.loss;
    TrainHistory hist;
    if (opt.epochs == 0) return hist;

    nn::Adam gen(store.trainable("soan."), {.lr = opt.lr});
    nn::ParamStore dstore;
    Rng drng = make_rng(opt.seed, 0xd15c);
    PatchDiscriminator disc{nn::make_conv(dstore, "disc.0", 3, 16, 3, 2, drng),
                            nn::make_conv(dstore, "disc.1", 16, 32, 3, 2, drng),
                            nn::make_conv(dstore, "disc.2", 32, 1, 3, 1, drng)};
    nn::Adam dopt(dstore.trainable(), {.lr = opt.lr});
    const bool adv = opt.loss == SoanLoss::adversarial;

    std::vector<std::size_t> order(data.size());
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = make_rng(opt.seed, 0x5ef, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle);
        double epoch_sum = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(opt.batch)) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + opt.batch)));
            Var hr = ag::constant(Tensor::concat0({stack_views(data, idx, true, true), stack_views(data, idx, true, false)}));
            auto [sl, sr] = soan.forward(ag::constant(stack_views(data, idx, false, true)),
                                         ag::constant(stack_views(data, idx, false, false)));
            Var sr_all = ag::concat({sl, sr}, 0);
            Var rec = ag::l1(sr_all, hr);
            Var loss = rec;
            if (adv) {
                Var logits = disc(sr_all);
                loss = ag::add(rec, ag::scale(ag::bce_with_logits(logits, Tensor(logits.shape(), 1.0)), opt.adv_weight));
            }
            gen.zero_grad();
            ag::backward(loss);
            gen.step();
            if (adv) {
                dopt.zero_grad();
                Var real = disc(hr);
                Var fake = disc(ag::constant(sr_all.value()));
                Var dloss = ag::add(ag::bce_with_logits(real, Tensor(real.shape(), 1.0)),
                                    ag::bce_with_logits(fake, Tensor(fake.shape(), 0.0)));
                ag::backward(dloss);
                dopt.step();
            }
            hist.step_losses.push_back(rec.value()[0]);
            epoch_sum += rec.value()[0];
            ++batches;
        }
        hist.epoch_losses.push_back(epoch_sum / batches);
    }
    return hist;
}

RestorationScore score_restoration(const Soan& soan, const std::vector<StereoSample>& data) {
    if (data.empty()) throw std::invalid_argument("score_restoration: empty dataset");
    RestorationScore s;
    double n = 0.0;
    const int scale = soan.config().scale;
    for (const StereoSample& d : data) {
        StereoImagePair out = soan.restore(d.lr);
        for (int v = 0; v < 2; ++v) {
            const Tensor& hr = v ? d.hr.right : d.hr.left;
            const Tensor& lr = v ? d.lr.right : d.lr.left;
            const Tensor& sr = v ? out.right : out.left;
            Tensor bic = resize(lr, lr.dim(1) * scale, lr.dim(2) * scale, Interp::bicubic);
            for (std::size_t i = 0; i < hr.numel(); ++i) {
                s.soan_l1 += std::abs(sr[i] - hr[i]);
                s.bicubic_l1 += std::abs(std::clamp(bic[i], 0.0, 1.0) - hr[i]);
            }
            n += static_cast<double>(hr.numel());
        }
    }
    s.soan_l1 /= n;
    s.bicubic_l1 /= n;
    return s;
}

ControlEmbed::ControlEmbed(int factor, int out_channels, nn::ParamStore& s, Rng& rng, const std::string& prefix)
    : m_factor(factor) {
    if (factor != 1 && factor != 2 && factor != 4) throw RangeError("control embed: factor must be 1, 2 or 4");
    m_c1 = nn::make_conv(s, prefix + ".conv.0", 3, 16, 3, factor >= 2 ? 2 : 1, rng);
    m_c2 = nn::make_conv(s, prefix + ".conv.1", 16, 32, 3, factor >= 4 ? 2 : 1, rng);
    m_c3 = nn::make_conv(s, prefix + ".conv.2", 32, out_channels, 3, 1, rng);
    m_fuse = make_scatm(s, prefix + ".scatm", out_channels, rng);
}

Var ControlEmbed::operator()(const Var& images) const {
    if (images.value().ndim() != 4 || images.dim(1) != 3 || images.dim(2) % m_factor || images.dim(3) % m_factor)
        throw ShapeError("control embed: bad image batch " + shape_str(images.shape()));
    Var h = ag::silu(m_c1(images));
    h = ag::silu(m_c2(h));
    return scatm_stacked(m_c3(h), m_fuse);
}

DualControlNet::DualControlNet(const DualUNetConfig& cfg, int factor, nn::ParamStore& s, Rng& rng,
                               const std::string& prefix)
    : m_cfg(cfg), m_prefix(prefix), m_embed(factor, cfg.channels(0), s, rng, prefix + ".embed") {
    cfg.validate();
    m_enc = make_encoder(s, prefix, cfg, rng);
    for (int l = 0; l < cfg.levels(); ++l)
        m_proj.push_back(nn::make_conv(s, prefix + ".zero." + std::to_string(l), cfg.channels(l), cfg.channels(l), 1, 1,
                                       rng, true));
}

std::vector<Var> DualControlNet::forward(const Var& z_left, const Var& z_right, const Var& images_stacked,
                                         const std::vector<int>& t, const PromptBundle& prompts) const {
    require_same_shape(z_left.value(), z_right.value(), "control views");
    const int b = z_left.dim(0);
    if (images_stacked.dim(0) != 2 * b) throw ShapeError("control: image batch must stack both views");
    if (static_cast<int>(t.size()) != b) throw ShapeError("control: need one time step per item");
    for (int s : t)
        if (s < 0 || s >= m_cfg.T) throw RangeError("control: time step out of range");
    Var emb = m_embed(images_stacked);
    if (emb.dim(2) != z_left.dim(2) || emb.dim(3) != z_left.dim(3))
        throw ShapeError("control: embedded size " + shape_str(emb.shape()) + " does not match latent " +
                         shape_str(z_left.shape()));
    std::vector<int> tt(t);
    tt.insert(tt.end(), t.begin(), t.end());
    Var temb = m_enc.time_embed(tt, m_cfg.time_dim);
    Var h = ag::add(m_enc.conv_in(ag::concat({z_left, z_right}, 0)), emb);
    std::vector<Var> skips = m_enc.run(h, temb, stack_context(prompts), nullptr);
    std::vector<Var> out;
    for (std::size_t l = 0; l < skips.size(); ++l) out.push_back(m_proj[l](skips[l]));
    return out;
}

void DualControlNet::init_from_unet(nn::ParamStore& store, const nn::ParamStore& unet_store,
                                    const std::string& unet_prefix) const {
    const std::string own = m_prefix + ".";
    for (auto& [name, var] : store.with_prefix(own)) {
        const std::string src = unet_prefix + "." + name.substr(own.size());
        if (!unet_store.contains(src)) continue;
        const Tensor& v = unet_store.get(src).value();
        if (v.same_shape(var.value())) store.get(name).mutable_value() = v;
    }
}

}  // namespace sdsr
