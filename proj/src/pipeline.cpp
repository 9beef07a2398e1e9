#include "sdsr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace sdsr {

std::string to_string(ControlMode m) {
    switch (m) {
        case ControlMode::none: return "none";
        case ControlMode::plain: return "plain";
        case ControlMode::soa: return "soa";
    }
    return "?";
}

ControlMode control_mode_from_string(const std::string& s) {
    if (s == "none") return ControlMode::none;
    if (s == "plain") return ControlMode::plain;
    if (s == "soa") return ControlMode::soa;
    throw std::invalid_argument("controlnet.mode must be none, plain or soa, got " + s);
}

SceneConfig scene_config(const Config& c) {
    SceneConfig s;
    s.size = c.get_int("data.hr_size");
    s.min_objects = c.get_int("data.min_objects");
    s.max_objects = c.get_int("data.max_objects");
    s.min_disp = c.get_int("data.min_disp");
    s.max_disp = c.get_int("data.max_disp");
    s.large_disp = c.get_int("data.large_disp");
    DegradationConfig& d = s.degradation;
    d.blur_prob = c.get_double("degradation.blur_prob");
    d.kernel_size = c.get_int("degradation.kernel_size");
    d.sigma = {c.get_double("degradation.sigma_lo"), c.get_double("degradation.sigma_hi")};
    d.aniso_prob = c.get_double("degradation.aniso_prob");
    d.resize = {c.get_double("degradation.resize_lo"), c.get_double("degradation.resize_hi")};
    d.noise = {c.get_double("degradation.noise_lo"), c.get_double("degradation.noise_hi")};
    d.compress = {c.get_double("degradation.compress_lo"), c.get_double("degradation.compress_hi")};
    d.second_prob = c.get_double("degradation.second_prob");
    d.out_scale = c.get_int("data.scale");
    d.per_view_noise = c.get_bool("degradation.per_view_noise");
    return s;
}

CodecConfig codec_config(const Config& c) {
    CodecConfig k;
    k.factor = c.get_int("codec.factor");
    k.latent_channels = c.get_int("codec.latent_channels");
    k.width = c.get_int("codec.width");
    k.bypass = c.get_bool("codec.bypass");
    return k;
}

SseConfig sse_config(const Config& c) {
    SseConfig s;
    s.image_size = c.get_int("data.hr_size") / c.get_int("data.scale");
    s.token_side = c.get_int("sse.token_side");
    s.dim = c.get_int("sse.dim");
    s.width = c.get_int("sse.width");
    s.threshold = c.get_double("sse.threshold");
    s.tag_merge = c.get_bool("sse.tag_merge_enabled");
    return s;
}

SoanConfig soan_config(const Config& c) {
    SoanConfig s;
    s.channels = c.get_int("soan.channels");
    s.groups = c.get_int("soan.groups");
    s.window = c.get_int("soan.window");
    s.scale = c.get_int("data.scale");
    s.lr_size = c.get_int("data.hr_size") / s.scale;
    return s;
}

DualUNetConfig unet_config(const Config& c) {
    DualUNetConfig u;
    const CodecConfig k = codec_config(c);
    u.latent_channels = k.bypass ? 3 : k.latent_channels;
    u.base_channels = c.get_int("unet.base_channels");
    u.channel_mults = c.get_int_list("unet.channel_mults");
    u.attn_levels = c.get_int_list("unet.attn_levels");
    u.tascata_levels = c.get_bool("tascata.enabled") ? c.get_int_list("tascata.insertion_levels") : std::vector<int>{};
    u.time_dim = c.get_int("unet.time_dim");
    u.context_dim = c.get_int("sse.dim");
    u.T = c.get_int("diffusion.T");
    u.tau = c.get_double("tascata.tau");
    return u;
}

NoiseSchedule schedule_from(const Config& c) {
    return make_schedule(c.get_int("diffusion.T"), c.get_double("diffusion.beta_min"), c.get_double("diffusion.beta_max"));
}

BlockMatchOptions block_match_options(const Config& c) {
    return {c.get_int("metrics.max_disp"), c.get_int("metrics.block")};
}

SsimOptions ssim_options(const Config& c) {
    SsimOptions o;
    o.window = c.get_int("metrics.ssim_window");
    return o;
}

CodecTrainOptions codec_train_options(const Config& c) {
    CodecTrainOptions o;
    o.epochs = c.get_int("codec.epochs");
    o.batch = c.get_int("codec.batch");
    o.lr = c.get_double("codec.lr");
    o.seed = static_cast<std::uint64_t>(c.get_i64("codec.seed"));
    return o;
}

SseTrainOptions sse_train_options(const Config& c) {
    SseTrainOptions o;
    o.epochs = c.get_int("sse.epochs");
    o.batch = c.get_int("sse.batch");
    o.lr = c.get_double("sse.lr");
    o.seed = static_cast<std::uint64_t>(c.get_i64("sse.seed"));
    return o;
}

SoanTrainOptions soan_train_options(const Config& c, SoanLoss loss) {
    SoanTrainOptions o;
    o.loss = loss;
    o.epochs = c.get_int("soan.epochs");
    o.batch = c.get_int("soan.batch");
    o.lr = c.get_double("soan.lr");
    o.adv_weight = c.get_double("soan.adv_weight");
    o.seed = static_cast<std::uint64_t>(c.get_i64("soan.seed"));
    return o;
}

std::vector<StereoSample> make_train_split(const Config& c) {
    return synth_stereo_dataset(c.get_int("data.train_pairs"), static_cast<std::uint64_t>(c.get_i64("data.seed")),
                                scene_config(c));
}

std::vector<StereoSample> make_test_split(const Config& c) {
    return synth_stereo_dataset(c.get_int("data.test_pairs"),
                                derive_seed(static_cast<std::uint64_t>(c.get_i64("data.seed")), 0x7e57), scene_config(c));
}

std::string Workspace::path(const std::string& rel) const { return (fs::path(root) / rel).string(); }

Models::Models(const Config& config)
    : cfg(config), vocab(TagVocabulary::toy()), sched(schedule_from(config)),
      mode(control_mode_from_string(config.get("controlnet.mode"))) {
    if (cfg.get_int("data.hr_size") % cfg.get_int("data.scale")) throw std::invalid_argument("hr_size not divisible by scale");
    Rng codec_rng = make_rng(static_cast<std::uint64_t>(cfg.get_i64("codec.seed")), 1);
    codec = std::make_unique<LatentCodec>(codec_config(cfg), codec_store, codec_rng);
    Rng sse_rng = make_rng(static_cast<std::uint64_t>(cfg.get_i64("sse.seed")), 1);
    sse = std::make_unique<StereoSemanticExtractor>(sse_config(cfg), vocab.size(), sse_store, sse_rng);
    Rng soan_rng = make_rng(static_cast<std::uint64_t>(cfg.get_i64("soan.seed")), 1);
    soan = std::make_unique<Soan>(soan_config(cfg), soan_store, soan_rng);
    Rng soan_rng2 = make_rng(static_cast<std::uint64_t>(cfg.get_i64("soan.seed")), 1);
    infer_soan = std::make_unique<Soan>(soan_config(cfg), infer_soan_store, soan_rng2);

    Rng diff_rng = make_rng(static_cast<std::uint64_t>(cfg.get_i64("train.seed")), 0xd1ff);
    const DualUNetConfig ucfg = unet_config(cfg);
    unet = std::make_unique<DualUNet>(ucfg, diffusion_store, diff_rng, "unet");
    if (mode != ControlMode::none) {
        control = std::make_unique<DualControlNet>(ucfg, codec->factor(), diffusion_store, diff_rng, "control");
        control->init_from_unet(diffusion_store, diffusion_store, "unet");
    }
}

std::vector<std::pair<std::string, Var>> Models::trainable() const {
    const bool base = cfg.get_bool("unet.trainable");
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& e : diffusion_store.trainable())
        if (base || e.first.rfind("control.", 0) == 0 || e.first.find(".tascata.") != std::string::npos)
            out.push_back(e);
    return out;
}

std::uint64_t Models::frozen_checksum() const {
    std::uint64_t h = codec_store.checksum();
    h = checksum_combine(h, sse_store.checksum());
    h = checksum_combine(h, soan_store.checksum());
    return checksum_combine(h, infer_soan_store.checksum());
}

namespace {

void restore_prefix(nn::ParamStore& store, const std::map<std::string, Tensor>& tensors, const std::string& prefix,
                    const std::string& what) {
    for (auto& [name, var] : store.with_prefix(prefix)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error(what + ": checkpoint lacks " + name);
        if (!it->second.same_shape(var.value()))
            throw std::runtime_error(what + ": " + name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                                     shape_str(var.shape()));
        store.get(name).mutable_value() = it->second;
    }
}

Checkpoint load_component(const std::string& path, const std::string& component) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.component != component)
        throw std::runtime_error(path + " holds component '" + ck.component + "', expected '" + component + "'");
    return ck;
}

std::vector<std::pair<std::string, Tensor>> store_tensors(const nn::ParamStore& s, const std::string& prefix = "") {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, var] : s.with_prefix(prefix)) out.emplace_back(name, var.value());
    return out;
}

nlohmann::json section(const Config& c, const std::string& prefix) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : c.values())
        if (k.rfind(prefix + ".", 0) == 0) j[k] = v;
    return j;
}

}  // namespace

void Models::load_codec(const std::string& path) {
    restore_prefix(codec_store, load_component(path, "codec").tensors, "", "codec");
}

void Models::load_sse(const std::string& path) {
    restore_prefix(sse_store, load_component(path, "sse").tensors, "", "sse");
}

void Models::load_soan(const std::string& path, bool for_training, bool for_inference) {
    Checkpoint ck = load_component(path, "soan");
    const SoanLoss mode_tag = soan_loss_from_string(ck.manifest.value("loss_mode_tag", "l1"));
    if (for_training) {
        restore_prefix(soan_store, ck.tensors, "", "soan");
        soan->loss_mode = mode_tag;
    }
    if (for_inference) {
        restore_prefix(infer_soan_store, ck.tensors, "", "soan");
        infer_soan->loss_mode = mode_tag;
    }
}

void Models::load_diffusion(const std::string& dir) {
    restore_prefix(diffusion_store, load_component((fs::path(dir) / "unet.ckpt").string(), "dual_unet").tensors, "unet.",
                   "dual_unet");
    if (control)
        restore_prefix(diffusion_store,
                       load_component((fs::path(dir) / "control.ckpt").string(), "dual_controlnet").tensors,
                       "control.", "dual_controlnet");
}

void save_codec(const Models& m, const std::string& path) {
    const CodecConfig& k = m.codec->config();
    save_checkpoint(path, "codec", store_tensors(m.codec_store),
                    {{"config", section(m.cfg, "codec")},
                     {"factor", m.codec->factor()},
                     {"latent_channels", m.codec->channels()},
                     {"bypass", k.bypass},
                     {"latent_scale", m.codec->latent_scale()}});
}

void save_sse(const Models& m, const std::string& path) {
    save_checkpoint(path, "sse", store_tensors(m.sse_store),
                    {{"config", section(m.cfg, "sse")}, {"vocabulary", m.vocab.tags()}});
}

void save_soan(const Models& m, const std::string& path) {
    const SoanConfig& s = m.soan->config();
    save_checkpoint(path, "soan", store_tensors(m.soan_store),
                    {{"config", section(m.cfg, "soan")},
                     {"loss_mode_tag", to_string(m.soan->loss_mode)},
                     {"scale", s.scale},
                     {"channels", s.channels},
                     {"groups", s.groups}});
}

StereoImagePair control_images(const Models& m, const StereoImagePair& lr, bool inference) {
    switch (m.mode) {
        case ControlMode::none: return {};
        case ControlMode::plain: {
            const int s = m.cfg.get_int("data.scale");
            StereoImagePair out{resize(lr.left, lr.height() * s, lr.width() * s, Interp::bicubic),
                                resize(lr.right, lr.height() * s, lr.width() * s, Interp::bicubic)};
            for (Tensor* t : {&out.left, &out.right})
                for (double& v : t->vec()) v = std::clamp(v, 0.0, 1.0);
            return out;
        }
        case ControlMode::soa: return (inference ? m.infer_soan : m.soan)->restore(lr);
    }
    return {};
}

StereoImagePair control_images(const Models& m, const StereoImagePair& lr) { return control_images(m, lr, false); }

std::vector<ConditionItem> build_conditions(const Models& m, const std::vector<StereoSample>& data) {
    std::vector<ConditionItem> out;
    out.reserve(data.size());
    for (const StereoSample& s : data) {
        ConditionItem c;
        c.z_left = m.codec->encode(s.hr.left);
        c.z_right = m.codec->encode(s.hr.right);
        c.prompts = m.sse->prompts(s.lr);
        StereoImagePair ctl = control_images(m, s.lr, false);
        c.control_left = ctl.left;
        c.control_right = ctl.right;
        out.push_back(std::move(c));
    }
    return out;
}

TrainerOptions trainer_options(const Config& c) {
    TrainerOptions o;
    o.epochs = c.get_int("train.epochs");
    o.batch = c.get_int("train.batch");
    o.adam.lr = c.get_double("train.lr");
    o.adam.beta1 = c.get_double("train.beta1");
    o.adam.beta2 = c.get_double("train.beta2");
    o.adam.clip_norm = c.get_double("train.clip_norm");
    o.seed = static_cast<std::uint64_t>(c.get_i64("train.seed"));
    o.ckpt_every = c.get_int("train.ckpt_every");
    return o;
}

Trainer::Trainer(Models& models, std::vector<ConditionItem> conditions, TrainerOptions opt)
    : m_models(models), m_items(std::move(conditions)), m_opt(std::move(opt)), m_adam(models.trainable(), m_opt.adam) {
    if (m_items.empty()) throw std::invalid_argument("trainer: empty dataset");
    if (m_opt.batch < 1 || m_opt.epochs < 0 || !(m_opt.adam.lr > 0.0)) throw RangeError("trainer: invalid options");
    m_frozen = models.frozen_checksum();
}

namespace {

Tensor stack_items(const std::vector<const Tensor*>& parts) {
    std::vector<Tensor> lifted;
    for (const Tensor* t : parts) lifted.push_back(t->reshaped({1, t->dim(0), t->dim(1), t->dim(2)}));
    return Tensor::concat0(lifted);
}

}  // namespace

double Trainer::train_step(const std::vector<std::size_t>& items) {
    const Models& m = m_models;
    const int b = static_cast<int>(items.size());
    std::vector<const Tensor*> zl, zr, cl, cr;
    std::vector<const PromptBundle*> prompts;
    for (std::size_t i : items) {
        const ConditionItem& c = m_items.at(i);
        zl.push_back(&c.z_left);
        zr.push_back(&c.z_right);
        cl.push_back(&c.control_left);
        cr.push_back(&c.control_right);
        prompts.push_back(&c.prompts);
    }
    const PromptBundle pb = PromptBundle::stack(prompts);
    const LatentPair z0{stack_items(zl), stack_items(zr)};

    Rng rng = make_rng(m_opt.seed, 0x7157, static_cast<std::uint64_t>(m_step));
    std::uniform_int_distribution<int> pick(0, m.sched.T - 1);
    std::vector<int> t(static_cast<std::size_t>(b));
    for (int& s : t) s = pick(rng);
    const NoiseDraw noise = draw_noise(z0.left.shape(), derive_seed(m_opt.seed, 0x6e, static_cast<std::uint64_t>(m_step)),
                                       m.cfg.get_bool("diffusion.shared_noise"));
    const LatentPair zt = add_noise(z0, t, noise, m.sched);
    Var vl = ag::constant(zt.left), vr = ag::constant(zt.right);

    std::vector<Var> controls;
    if (m.control) {
        std::vector<const Tensor*> imgs(cl);
        imgs.insert(imgs.end(), cr.begin(), cr.end());
        controls = m.control->forward(vl, vr, ag::constant(stack_items(imgs)), t, pb);
    }
    auto [pl, pr] = m.unet->forward(vl, vr, t, pb, m.control ? &controls : nullptr);
    Var loss = diffusion_loss(pl, pr, noise);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite diffusion loss at step " << m_step << " (t =";
        for (int s : t) msg << ' ' << s;
        msg << ")";
        throw std::runtime_error(msg.str());
    }
    m_adam.zero_grad();
    ag::backward(loss);
    m_adam.step();
    m_losses.push_back(value);
    ++m_step;
    return value;
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(int epoch) const {
    std::vector<std::size_t> order(m_items.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(m_opt.seed, 0xba7c, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(m_opt.batch))
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + m_opt.batch)));
    return out;
}

std::vector<std::string> Trainer::run() {
    std::vector<std::string> written;
    auto checkpoint = [&] {
        if (m_opt.ckpt_dir.empty()) return;
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d", m_epoch);
        const std::string dir = (fs::path(m_opt.ckpt_dir) / name).string();
        save(dir);
        written.push_back(dir);
    };
    if (m_opt.epochs == 0) checkpoint();
    while (m_epoch < m_opt.epochs) {
        for (const auto& batch : epoch_batches(m_epoch)) train_step(batch);
        ++m_epoch;
        if (m_models.frozen_checksum() != m_frozen)
            throw std::logic_error("frozen components changed during diffusion training");
        if (m_epoch == m_opt.epochs || (m_opt.ckpt_every > 0 && m_epoch % m_opt.ckpt_every == 0)) checkpoint();
    }
    return written;
}

void Trainer::save(const std::string& dir) const {
    fs::create_directories(dir);
    const Config& c = m_models.cfg;
    const nlohmann::json rng{{"seed", m_opt.seed}, {"step", m_step}, {"epoch", m_epoch},
                             {"scheme", "per-step streams derived from (seed, step); shuffles from (seed, epoch)"}};
    nlohmann::json unet_meta{{"config", section(c, "unet")}, {"tascata", section(c, "tascata")}, {"rng", rng}};
    save_checkpoint((fs::path(dir) / "unet.ckpt").string(), "dual_unet", store_tensors(m_models.diffusion_store, "unet."),
                    unet_meta);
    if (m_models.control)
        save_checkpoint((fs::path(dir) / "control.ckpt").string(), "dual_controlnet",
                        store_tensors(m_models.diffusion_store, "control."),
                        {{"mode", to_string(m_models.mode)}, {"rng", rng}});
    std::vector<std::pair<std::string, Tensor>> opt;
    for (auto& [k, v] : m_adam.state()) opt.emplace_back(k, v);
    save_checkpoint((fs::path(dir) / "optim.ckpt").string(), "adam", opt, {{"rng", rng}});
    nlohmann::json state{{"step", m_step},
                         {"epoch", m_epoch},
                         {"rng", rng},
                         {"losses", m_losses},
                         {"frozen_checksum", m_frozen},
                         {"config", c.to_json()}};
    std::ofstream((fs::path(dir) / "trainer.json").string()) << state.dump(2) << '\n';
}

void Trainer::resume(const std::string& dir) {
    m_models.load_diffusion(dir);
    Checkpoint opt = load_component((fs::path(dir) / "optim.ckpt").string(), "adam");
    m_adam.load_state(opt.tensors);
    std::ifstream in((fs::path(dir) / "trainer.json").string());
    if (!in) throw std::runtime_error("missing trainer.json in " + dir);
    const nlohmann::json state = nlohmann::json::parse(in);
    m_step = state.at("step");
    m_epoch = state.at("epoch");
    m_losses = state.at("losses").get<std::vector<double>>();
}

std::vector<StereoImagePair> infer(const Models& m, const std::vector<StereoImagePair>& lr, int steps,
                                   std::uint64_t seed, int batch) {
    if (steps < 1) throw RangeError("infer: steps must be positive");
    const int scale = m.cfg.get_int("data.scale");
    const bool shared = m.cfg.get_bool("diffusion.shared_noise");
    const SoanConfig sc = m.infer_soan->config();
    // Below T-1 sampling starts from the bicubic upsample's latent noised to that level, not from pure noise.
    const int start = m.cfg.get_int("diffusion.infer_start");
    if (start != -1 && (start < 0 || start >= m.sched.T))
        throw RangeError("infer: diffusion.infer_start must be -1 or lie in [0, T)");
    const bool warm = start != -1 && start < m.sched.T - 1;
    std::vector<StereoImagePair> out;
    ag::NoGradGuard guard;
    for (std::size_t s = 0; s < lr.size(); s += static_cast<std::size_t>(batch)) {
        const std::size_t e = std::min(lr.size(), s + static_cast<std::size_t>(batch));
        const int b = static_cast<int>(e - s);
        std::vector<PromptBundle> pbs;
        std::vector<const Tensor*> imgs_l, imgs_r;
        std::vector<StereoImagePair> ctl;
        std::vector<Tensor> init_l, init_r;
        for (std::size_t i = s; i < e; ++i) {
            const StereoImagePair& p = lr[i];
            if (p.left.ndim() != 3 || p.height() != sc.lr_size || p.width() != sc.lr_size)
                throw ShapeError("infer: LR pair must be [3," + std::to_string(sc.lr_size) + "," +
                                 std::to_string(sc.lr_size) + "], got " + shape_str(p.left.shape()));
            pbs.push_back(m.sse->prompts(p));
            ctl.push_back(control_images(m, p, true));
            const Shape ls = m.codec->latent_shape(p.height() * scale, p.width() * scale);
            LatentPair z0 = initial_latents({1, ls[0], ls[1], ls[2]}, derive_seed(seed, i), shared);
            if (warm) {
                const int h = p.height() * scale, w = p.width() * scale;
                Tensor ul = resize(p.left, h, w, Interp::bicubic), ur = resize(p.right, h, w, Interp::bicubic);
                for (Tensor* t : {&ul, &ur})
                    for (double& v : t->vec()) v = std::clamp(v, 0.0, 1.0);
                const LatentPair base{m.codec->encode(ul.reshaped({1, 3, h, w})), m.codec->encode(ur.reshaped({1, 3, h, w}))};
                z0 = add_noise(base, start, NoiseDraw{z0.left, z0.right}, m.sched);
            }
            init_l.push_back(z0.left);
            init_r.push_back(z0.right);
        }
        std::vector<const PromptBundle*> pp;
        for (const auto& p : pbs) pp.push_back(&p);
        const PromptBundle prompts = PromptBundle::stack(pp);
        Var images;
        if (m.control) {
            std::vector<const Tensor*> parts;
            for (const auto& c : ctl) parts.push_back(&c.left);
            for (const auto& c : ctl) parts.push_back(&c.right);
            images = ag::constant(stack_items(parts));
        }
        LatentPair z{Tensor::concat0(init_l), Tensor::concat0(init_r)};
        const std::vector<int> ts = warm ? ddim_timesteps(m.sched.T, steps, start) : ddim_timesteps(m.sched.T, steps);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            const std::vector<int> t(static_cast<std::size_t>(b), ts[k]);
            Var vl = ag::constant(z.left), vr = ag::constant(z.right);
            std::vector<Var> controls;
            if (m.control) controls = m.control->forward(vl, vr, images, t, prompts);
            auto [pl, pr] = m.unet->forward(vl, vr, t, prompts, m.control ? &controls : nullptr);
            const int t_prev = k + 1 < ts.size() ? ts[k + 1] : -1;
            z = ddim_step(z, {pl.value(), pr.value()}, ts[k], t_prev, m.sched);
        }
        Tensor dl = m.codec->decode(z.left), dr = m.codec->decode(z.right);
        for (Tensor* t : {&dl, &dr})
            for (double& v : t->vec()) v = std::clamp(v, 0.0, 1.0);
        for (int i = 0; i < b; ++i) {
            Tensor l = dl.slice0(i, 1), r = dr.slice0(i, 1);
            out.push_back({l.reshaped({l.dim(1), l.dim(2), l.dim(3)}), r.reshaped({r.dim(1), r.dim(2), r.dim(3)})});
        }
    }
    return out;
}

Report evaluate(const std::vector<StereoImagePair>& pred, const std::vector<StereoImagePair>& gt,
                const std::vector<std::string>& ids, const BlockMatchOptions& bm, const SsimOptions& so) {
    if (pred.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (pred.size() != gt.size() || ids.size() != gt.size()) throw ShapeError("evaluate: size mismatch");
    Report r;
    r.rows.resize(pred.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < pred.size(); ++i) {
        MetricRow& row = r.rows[i];
        row.pair_id = ids[i];
        row.psnr_l = psnr(pred[i].left, gt[i].left);
        row.psnr_r = psnr(pred[i].right, gt[i].right);
        row.ssim_l = ssim(pred[i].left, gt[i].left, so);
        row.ssim_r = ssim(pred[i].right, gt[i].right, so);
        row.made = made(pred[i], gt[i], bm);
    }
    for (const MetricRow& row : r.rows) {
        r.psnr += 0.5 * (row.psnr_l + row.psnr_r);
        r.ssim += 0.5 * (row.ssim_l + row.ssim_r);
        r.made += row.made;
    }
    const double n = static_cast<double>(r.rows.size());
    r.psnr /= n;
    r.ssim /= n;
    r.made /= n;
    return r;
}

void write_report(const Report& r, const std::string& csv_path, const std::string& json_path) {
    for (const std::string& p : {csv_path, json_path})
        if (auto parent = fs::path(p).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path);
    csv << "pair_id,psnr_l,psnr_r,ssim_l,ssim_r,made\n";
    csv.precision(17);
    for (const MetricRow& row : r.rows)
        csv << row.pair_id << ',' << row.psnr_l << ',' << row.psnr_r << ',' << row.ssim_l << ',' << row.ssim_r << ','
            << row.made << '\n';
    nlohmann::json j{{"pairs", r.rows.size()}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"made", r.made}};
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("cannot write " + json_path);
    js << j.dump(2) << '\n';
}

Report read_report_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open " + csv_path);
    Report r;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        MetricRow row;
        std::string cell;
        std::getline(ss, row.pair_id, ',');
        double* fields[] = {&row.psnr_l, &row.psnr_r, &row.ssim_l, &row.ssim_r, &row.made};
        for (double* f : fields) {
            std::getline(ss, cell, ',');
            *f = std::stod(cell);
        }
        r.rows.push_back(row);
    }
    return r;
}

Tensor comparison_grid(const std::vector<StereoSample>& data, const std::vector<StereoImagePair>& soan_out,
                       const std::vector<StereoImagePair>& model_out, int pairs) {
    std::vector<std::vector<Tensor>> rows;
    const std::size_t n = std::min({data.size(), soan_out.size(), model_out.size(), static_cast<std::size_t>(pairs)});
    for (std::size_t i = 0; i < n; ++i) {
        rows.push_back({data[i].lr.left, soan_out[i].left, model_out[i].left, data[i].hr.left});
        rows.push_back({data[i].lr.right, soan_out[i].right, model_out[i].right, data[i].hr.right});
    }
    return make_grid(rows);
}

double ls_slope(const std::vector<double>& y) {
    const std::size_t n = y.size();
    if (n < 2) throw std::invalid_argument("ls_slope: need at least two points");
    const double mx = (static_cast<double>(n) - 1.0) / 2.0;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (static_cast<double>(i) - mx) * (y[i] - my);
        sxx += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
    }
    return sxy / sxx;
}

}  // namespace sdsr
