// Command-line front end: data synthesis, staged pretraining, diffusion
// training, inference, evaluation and report aggregation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sdsr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sdsr;

namespace {

struct Common {
    std::vector<std::string> config_files;
    std::string preset = "desk";
    std::vector<std::string> overrides;
    std::string workdir;

    Config build() const {
        Config cfg = Config::preset(preset);
        for (const auto& f : config_files) cfg.load_file(f);
        for (const auto& o : overrides) cfg.set_override(o);
        if (!workdir.empty()) cfg.set("pipeline.workdir", workdir);
        return cfg;
    }
};

void write_history(const std::string& path, const TrainHistory& h) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < h.epoch_losses.size(); ++i) out << i << ',' << h.epoch_losses[i] << '\n';
}

std::vector<StereoSample> load_split(const std::string& dir) {
    if (!fs::exists(dir)) throw std::runtime_error(dir + " does not exist; run synth-data first");
    return load_dataset(dir);
}

void require_file(const std::string& path, const std::string& stage) {
    if (!fs::exists(path)) throw std::runtime_error("missing " + path + "; run " + stage + " first");
}

std::string latest_checkpoint(const Workspace& ws) {
    std::string best;
    if (fs::exists(ws.train_dir()))
        for (const auto& e : fs::directory_iterator(ws.train_dir()))
            if (e.is_directory() && e.path().filename().string().rfind("epoch_", 0) == 0)
                best = std::max(best, e.path().string());
    if (best.empty()) throw std::runtime_error("no diffusion checkpoint under " + ws.train_dir() + "; run train first");
    return best;
}

// Loads the frozen components. SOAN paths fall back to the checkpoint of the
// configured soan.loss; an explicit inference path overrides the config.
void load_frozen(Models& m, const Workspace& ws, const std::string& infer_soan_override = "") {
    require_file(ws.codec_ckpt(), "pretrain-codec");
    require_file(ws.sse_ckpt(), "pretrain-sse");
    m.load_codec(ws.codec_ckpt());
    m.load_sse(ws.sse_ckpt());
    if (m.mode != ControlMode::soa) return;
    std::string train_path = m.cfg.get("pipeline.train_soan_ckpt");
    if (train_path.empty()) train_path = ws.soan_ckpt(soan_loss_from_string(m.cfg.get("soan.loss")));
    std::string infer_path = infer_soan_override.empty() ? m.cfg.get("pipeline.infer_soan_ckpt") : infer_soan_override;
    if (infer_path.empty()) infer_path = train_path;
    require_file(train_path, "pretrain-soan");
    require_file(infer_path, "pretrain-soan");
    m.load_soan(train_path, true, false);
    m.load_soan(infer_path, false, true);
}

int cmd_synth(const Config& cfg) {
    const Workspace ws(cfg);
    const auto train = make_train_split(cfg);
    const auto test = make_test_split(cfg);
    save_dataset(ws.train_data(), train);
    save_dataset(ws.test_data(), test);
    std::ofstream(ws.path("config.txt")) << cfg.to_text();
    std::printf("wrote %zu train and %zu test pairs under %s\n", train.size(), test.size(), ws.root.c_str());
    return 0;
}

int cmd_codec(const Config& cfg) {
    const Workspace ws(cfg);
    const auto train = load_split(ws.train_data());
    const auto test = load_split(ws.test_data());
    Models m(cfg);
    const TrainHistory h = pretrain_codec(*m.codec, m.codec_store, train, codec_train_options(cfg));
    save_codec(m, ws.codec_ckpt());
    write_history(ws.path("logs/codec_loss.csv"), h);
    double total = 0.0;
    for (const auto& s : test)
        for (const Tensor* im : {&s.hr.left, &s.hr.right}) {
            Tensor r = m.codec->decode(m.codec->encode(*im));
            for (double& v : r.vec()) v = std::clamp(v, 0.0, 1.0);
            total += psnr(r, *im);
        }
    std::printf("codec: final loss %.6f, held-out reconstruction PSNR %.2f dB\n", h.epoch_losses.back(),
                total / (2.0 * static_cast<double>(test.size())));
    return 0;
}

int cmd_sse(const Config& cfg) {
    const Workspace ws(cfg);
    const auto train = load_split(ws.train_data());
    const auto test = load_split(ws.test_data());
    Models m(cfg);
    const TrainHistory h = pretrain_sse(*m.sse, m.sse_store, train, sse_train_options(cfg));
    save_sse(m, ws.sse_ckpt());
    write_history(ws.path("logs/sse_loss.csv"), h);
    std::printf("sse: final loss %.6f, held-out tag accuracy %.4f\n", h.epoch_losses.back(), tag_accuracy(*m.sse, test));
    return 0;
}

int cmd_soan(const Config& cfg, const std::string& loss_name) {
    const Workspace ws(cfg);
    const SoanLoss loss = soan_loss_from_string(loss_name);
    const auto train = load_split(ws.train_data());
    const auto test = load_split(ws.test_data());
    Models m(cfg);
    m.soan->loss_mode = loss;
    const TrainHistory h = soan_pretrain(*m.soan, m.soan_store, train, soan_train_options(cfg, loss));
    save_soan(m, ws.soan_ckpt(loss));
    write_history(ws.path("logs/soan_" + loss_name + "_loss.csv"), h);
    const RestorationScore r = score_restoration(*m.soan, test);
    std::printf("soan (%s): held-out L1 %.5f vs bicubic %.5f\n", to_string(loss).c_str(), r.soan_l1, r.bicubic_l1);
    return 0;
}

int cmd_train(const Config& cfg, const std::string& resume) {
    const Workspace ws(cfg);
    const auto train = load_split(ws.train_data());
    Models m(cfg);
    load_frozen(m, ws);
    TrainerOptions opt = trainer_options(cfg);
    opt.ckpt_dir = ws.train_dir();
    Trainer trainer(m, build_conditions(m, train), opt);
    if (!resume.empty()) trainer.resume(resume);
    const auto dirs = trainer.run();
    fs::create_directories(ws.path("logs"));
    std::ofstream log(ws.path("logs/train_loss.csv"));
    log << "step,loss\n";
    for (std::size_t i = 0; i < trainer.losses().size(); ++i) log << i << ',' << trainer.losses()[i] << '\n';
    for (const auto& d : dirs) std::printf("checkpoint %s\n", d.c_str());
    if (!trainer.losses().empty())
        std::printf("train: %ld steps, last loss %.6f\n", trainer.step(), trainer.losses().back());
    return 0;
}

int cmd_infer(const Config& cfg, const std::string& in, const std::string& out, int steps, std::uint64_t seed,
              const std::string& soan_ckpt, std::string ckpt) {
    const Workspace ws(cfg);
    Models m(cfg);
    load_frozen(m, ws, soan_ckpt);
    if (ckpt.empty()) ckpt = latest_checkpoint(ws);
    m.load_diffusion(ckpt);
    const auto named = load_pair_dir(in);
    if (named.empty()) throw std::runtime_error("no *_left.png / *_right.png pairs in " + in);
    std::vector<StereoImagePair> lr;
    for (const auto& [name, pair] : named) lr.push_back(pair);
    const auto sr = infer(m, lr, steps, seed);
    fs::create_directories(out);
    for (std::size_t i = 0; i < sr.size(); ++i) {
        write_png((fs::path(out) / (named[i].first + "_left.png")).string(), sr[i].left);
        write_png((fs::path(out) / (named[i].first + "_right.png")).string(), sr[i].right);
    }
    std::printf("wrote %zu SR pairs to %s using %s\n", sr.size(), out.c_str(), ckpt.c_str());
    return 0;
}

int cmd_evaluate(const Config& cfg, const std::string& name, std::string ckpt, int steps, std::uint64_t seed,
                 bool identity) {
    const Workspace ws(cfg);
    const auto test = load_split(ws.test_data());
    std::vector<StereoImagePair> gt, lr, soan_out, pred;
    std::vector<std::string> ids;
    for (const auto& s : test) {
        gt.push_back(s.hr);
        lr.push_back(s.lr);
        char id[16];
        std::snprintf(id, sizeof id, "%05d", s.id);
        ids.emplace_back(id);
    }
    Models m(cfg);
    if (identity) {
        pred = gt;
        soan_out = gt;
    } else {
        load_frozen(m, ws);
        if (ckpt.empty()) ckpt = latest_checkpoint(ws);
        m.load_diffusion(ckpt);
        pred = infer(m, lr, steps, seed);
        for (const auto& p : lr) soan_out.push_back(m.infer_soan->restore(p));
    }
    const BlockMatchOptions bm = block_match_options(cfg);
    const Report r = evaluate(pred, gt, ids, bm, ssim_options(cfg));
    const fs::path dir = fs::path(ws.eval_dir()) / name;
    fs::create_directories(dir / "sr");
    fs::create_directories(dir / "disparity");
    write_report(r, (dir / "report.csv").string(), (dir / "report.json").string());
    write_png((dir / "grid.png").string(), comparison_grid(test, soan_out, pred));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        write_png((dir / "sr" / (ids[i] + "_left.png")).string(), pred[i].left);
        write_png((dir / "sr" / (ids[i] + "_right.png")).string(), pred[i].right);
        write_disparity((dir / "disparity" / (ids[i] + "_disp.bin")).string(),
                        estimate_disparity(pred[i].left, pred[i].right, bm));
    }
    std::printf("%s: %zu pairs, PSNR %.3f, SSIM %.4f, MADE %.4f\n", name.c_str(), r.rows.size(), r.psnr, r.ssim, r.made);
    return 0;
}

int cmd_report(const Config& cfg) {
    const Workspace ws(cfg);
    if (!fs::exists(ws.eval_dir())) throw std::runtime_error("no evaluations under " + ws.eval_dir());
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(ws.eval_dir()))
        if (fs::exists(e.path() / "report.csv")) runs.push_back(e.path());
    std::sort(runs.begin(), runs.end());
    fs::create_directories(ws.path("reports"));
    std::ofstream csv(ws.path("reports/summary.csv"));
    csv << "run,pairs,psnr,ssim,made\n";
    nlohmann::json summary = nlohmann::json::array();
    std::printf("%-24s %6s %9s %8s %8s\n", "run", "pairs", "PSNR", "SSIM", "MADE");
    for (const auto& run : runs) {
        const Report r = read_report_csv((run / "report.csv").string());
        double p = 0, s = 0, d = 0;
        for (const auto& row : r.rows) {
            p += 0.5 * (row.psnr_l + row.psnr_r);
            s += 0.5 * (row.ssim_l + row.ssim_r);
            d += row.made;
        }
        const double n = std::max<double>(1.0, static_cast<double>(r.rows.size()));
        const std::string name = run.filename().string();
        csv << name << ',' << r.rows.size() << ',' << p / n << ',' << s / n << ',' << d / n << '\n';
        summary.push_back({{"run", name}, {"pairs", r.rows.size()}, {"psnr", p / n}, {"ssim", s / n}, {"made", d / n}});
        std::printf("%-24s %6zu %9.3f %8.4f %8.4f\n", name.c_str(), r.rows.size(), p / n, s / n, d / n);
    }
    std::ofstream(ws.path("reports/summary.json")) << summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stereo diffusion super-resolution toolkit"};
    app.require_subcommand(1);
    Common common;
    app.add_option("-c,--config", common.config_files, "Config files, applied in order over the preset");
    app.add_option("-p,--preset", common.preset, "Base preset")->check(CLI::IsMember(Config::preset_names()));
    app.add_option("-s,--set", common.overrides, "Override, key=value (repeatable)");
    app.add_option("-w,--workdir", common.workdir, "Working directory (pipeline.workdir)");

    auto* synth = app.add_subcommand("synth-data", "Render the toy stereo train/test splits");
    auto* codec = app.add_subcommand("pretrain-codec", "Train the latent autoencoder");
    auto* sse = app.add_subcommand("pretrain-sse", "Train the semantic tagger");
    auto* soan = app.add_subcommand("pretrain-soan", "Train the stereo restorer");
    std::string loss = "l1";
    soan->add_option("--loss", loss, "Loss mode")->check(CLI::IsMember({"l1", "adv"}));

    auto* train = app.add_subcommand("train", "Train the dual denoiser and control branch");
    std::string resume;
    train->add_option("--resume", resume, "Checkpoint directory to resume from");

    auto* inf = app.add_subcommand("infer", "Super-resolve a directory of LR pairs");
    std::string in_dir, out_dir, soan_ckpt, ckpt;
    int steps = -1;
    std::uint64_t seed = 0;
    inf->add_option("--in", in_dir, "Directory of <name>_left.png / <name>_right.png")->required();
    inf->add_option("--out", out_dir, "Output directory")->required();
    inf->add_option("--steps", steps, "DDIM steps (default diffusion.steps)");
    inf->add_option("--seed", seed, "Sampling seed");
    inf->add_option("--soan-ckpt", soan_ckpt, "SOAN checkpoint for inference");
    inf->add_option("--ckpt", ckpt, "Diffusion checkpoint directory (default: latest)");

    auto* eval = app.add_subcommand("evaluate", "Score the model on the test split");
    std::string name = "model";
    bool identity = false;
    eval->add_option("--name", name, "Run name under <workdir>/eval");
    eval->add_option("--ckpt", ckpt, "Diffusion checkpoint directory (default: latest)");
    eval->add_option("--steps", steps, "DDIM steps (default diffusion.steps)");
    eval->add_option("--seed", seed, "Sampling seed");
    eval->add_flag("--identity", identity, "Score ground truth against itself");

    auto* report = app.add_subcommand("report", "Aggregate every evaluation into a summary table");

    CLI11_PARSE(app, argc, argv);
    try {
        const Config cfg = common.build();
        if (steps < 0) steps = cfg.get_int("diffusion.steps");
        if (*synth) return cmd_synth(cfg);
        if (*codec) return cmd_codec(cfg);
        if (*sse) return cmd_sse(cfg);
        if (*soan) return cmd_soan(cfg, loss);
        if (*train) return cmd_train(cfg, resume);
        if (*inf) return cmd_infer(cfg, in_dir, out_dir, steps, seed, soan_ckpt, ckpt);
        if (*eval) return cmd_evaluate(cfg, name, ckpt, steps, seed, identity);
        if (*report) return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
