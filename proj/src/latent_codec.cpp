#include "sdsr/latent_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdsr {

namespace {

int stages_for(int factor) {
    switch (factor) {
        case 1: return 0;
        case 2: return 1;
        case 4: return 2;
        case 8: return 3;
        default: throw RangeError("codec: factor must be 1, 2, 4 or 8");
    }
}

Tensor lift(const Tensor& x) { return x.ndim() == 3 ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x; }

Tensor drop(const Tensor& x, bool single) { return single ? x.reshaped({x.dim(1), x.dim(2), x.dim(3)}) : x; }

}  // namespace

LatentCodec::LatentCodec(const CodecConfig& cfg, nn::ParamStore& s, Rng& rng) : m_cfg(cfg) {
    m_scale = s.add("codec.latent_scale", Tensor({1}, cfg.latent_scale), false);
    if (cfg.bypass) return;
    if (cfg.latent_channels < 1 || cfg.width < 1) throw RangeError("codec: invalid channel configuration");
    const int stages = stages_for(cfg.factor);
    int c = cfg.width;
    m_enc.push_back(nn::make_conv(s, "codec.enc.in", 3, c, 3, 1, rng));
    for (int i = 0; i < stages; ++i) {
        const std::string n = "codec.enc." + std::to_string(i);
        m_enc.push_back(nn::make_conv(s, n + ".down", c, 2 * c, 3, 2, rng));
        m_enc.push_back(nn::make_conv(s, n + ".conv", 2 * c, 2 * c, 3, 1, rng));
        c *= 2;
    }
    m_enc_out = nn::make_conv(s, "codec.enc.out", c, cfg.latent_channels, 3, 1, rng, true);
    m_dec_in = nn::make_conv(s, "codec.dec.in", cfg.latent_channels, c, 3, 1, rng);
    for (int i = 0; i < stages; ++i) {
        const std::string n = "codec.dec." + std::to_string(i);
        m_dec.push_back(nn::make_conv(s, n + ".up", c, c / 2, 3, 1, rng));
        m_dec.push_back(nn::make_conv(s, n + ".conv", c / 2, c / 2, 3, 1, rng));
        c /= 2;
    }
    m_dec_out = nn::make_conv(s, "codec.dec.out", c, 3, 3, 1, rng, true);
    // Linear space-to-channel shortcuts. They start as block averaging of the RGB
    // channels and its nearest-neighbour inverse; the conv stacks (zero output
    // projections) start silent and learn a residual over that.
    const int f = factor();
    m_enc_skip = nn::make_conv(s, "codec.enc.skip", 3, cfg.latent_channels, f, f, rng, true);
    m_enc_skip.pad = 0;
    m_dec_skip = nn::make_conv(s, "codec.dec.skip", cfg.latent_channels, 3 * f * f, 1, 1, rng, true);
    Tensor& we = m_enc_skip.weight.mutable_value();
    Tensor& wd = m_dec_skip.weight.mutable_value();
    for (int ch = 0; ch < std::min(3, cfg.latent_channels); ++ch)
        for (int i = 0; i < f * f; ++i) {
            we[static_cast<std::size_t>((ch * 3 + ch) * f * f + i)] = 1.0 / (f * f);
            wd[static_cast<std::size_t>((ch * f * f + i) * cfg.latent_channels + ch)] = 1.0;
        }
}

Var LatentCodec::encode_raw(const Var& images) const {
    if (images.value().ndim() != 4 || images.dim(1) != 3) throw ShapeError("codec: expected [B,3,H,W] images");
    if (images.dim(2) % factor() || images.dim(3) % factor())
        throw ShapeError("codec: image size " + shape_str(images.shape()) + " not divisible by factor " +
                         std::to_string(factor()));
    if (m_cfg.bypass) return images;
    Var h = images;
    for (const nn::Conv2d& c : m_enc) h = ag::silu(c(h));
    return ag::add(m_enc_out(h), m_enc_skip(images));
}

Var LatentCodec::encode(const Var& images) const {
    Var raw = encode_raw(images);
    return m_cfg.bypass ? raw : ag::mul_scalar(raw, m_scale);
}

Var LatentCodec::decode(const Var& latents) const {
    if (latents.value().ndim() != 4 || latents.dim(1) != channels())
        throw ShapeError("codec: latent " + shape_str(latents.shape()) + " does not match " + std::to_string(channels()) +
                         " channels");
    if (m_cfg.bypass) return latents;
    const Var z = ag::scale(latents, 1.0 / latent_scale());
    Var h = ag::silu(m_dec_in(z));
    for (std::size_t i = 0; i < m_dec.size(); i += 2) {
        h = ag::silu(m_dec[i](ag::upsample_nearest(h, 2)));
        h = ag::silu(m_dec[i + 1](h));
    }
    return ag::add(m_dec_out(h), ag::pixel_shuffle(m_dec_skip(z), factor()));
}

Tensor LatentCodec::encode(const Tensor& image) const {
    ag::NoGradGuard guard;
    return drop(encode(ag::constant(lift(image))).value(), image.ndim() == 3);
}

Tensor LatentCodec::decode(const Tensor& latent) const {
    ag::NoGradGuard guard;
    return drop(decode(ag::constant(lift(latent))).value(), latent.ndim() == 3);
}

void LatentCodec::calibrate_scale(const std::vector<Tensor>& images) {
    if (m_cfg.bypass || images.empty()) return;
    ag::NoGradGuard guard;
    // Two passes: the raw latents can have a mean far larger than their spread.
    std::vector<Tensor> zs;
    double sum = 0.0, n = 0.0;
    for (const Tensor& img : images) {
        zs.push_back(encode_raw(ag::constant(lift(img))).value());
        for (double v : zs.back().vec()) sum += v;
        n += static_cast<double>(zs.back().numel());
    }
    const double mean = sum / n;
    double sq = 0.0;
    for (const Tensor& z : zs)
        for (double v : z.vec()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(std::max(sq / n, 1e-24));
    m_scale.mutable_value()[0] = 1.0 / sd;
}

TrainHistory pretrain_codec(LatentCodec& codec, const nn::ParamStore& store, const std::vector<StereoSample>& data,
                            const CodecTrainOptions& opt) {
    if (data.empty()) throw std::invalid_argument("pretrain_codec: empty dataset");
    if (opt.batch < 1 || !(opt.lr > 0.0) || opt.epochs < 0) throw RangeError("pretrain_codec: invalid options");
    TrainHistory hist;
    if (opt.epochs == 0 || codec.config().bypass) return hist;
    std::vector<Tensor> images;
    for (const StereoSample& s : data) {
        images.push_back(s.hr.left);
        images.push_back(s.hr.right);
    }
    nn::Adam adam(store.trainable("codec."), {.lr = opt.lr});
    std::vector<std::size_t> order(images.size());
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = make_rng(opt.seed, 0xc0dec, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(opt.batch)) {
            std::vector<Tensor> parts;
            for (std::size_t i = s; i < std::min(order.size(), s + opt.batch); ++i) parts.push_back(lift(images[order[i]]));
            Var x = ag::constant(Tensor::concat0(parts));
            Var loss = ag::mse(codec.decode(codec.encode(x)), x);
            adam.zero_grad();
            ag::backward(loss);
            adam.step();
            hist.step_losses.push_back(loss.value()[0]);
            sum += loss.value()[0];
            ++batches;
        }
        hist.epoch_losses.push_back(sum / batches);
    }
    codec.calibrate_scale(images);
    return hist;
}

}  // namespace sdsr
