#pragma once

// Staged training (codec -> tagger -> SOAN -> diffusion), DDIM inference and
// evaluation. Every random draw derives from a configured seed plus counters,
// so a run is reproducible and resumable from any checkpoint.

#include <memory>
#include <string>
#include <vector>

#include "sdsr/config.hpp"
#include "sdsr/io.hpp"
#include "sdsr/latent_codec.hpp"
#include "sdsr/metrics.hpp"
#include "sdsr/soa_controlnet.hpp"
#include "sdsr/sse.hpp"

namespace sdsr {

enum class ControlMode { none, plain, soa };
std::string to_string(ControlMode m);
ControlMode control_mode_from_string(const std::string& s);

SceneConfig scene_config(const Config& cfg);
CodecConfig codec_config(const Config& cfg);
SseConfig sse_config(const Config& cfg);
SoanConfig soan_config(const Config& cfg);
DualUNetConfig unet_config(const Config& cfg);
NoiseSchedule schedule_from(const Config& cfg);
BlockMatchOptions block_match_options(const Config& cfg);
SsimOptions ssim_options(const Config& cfg);
CodecTrainOptions codec_train_options(const Config& cfg);
SseTrainOptions sse_train_options(const Config& cfg);
SoanTrainOptions soan_train_options(const Config& cfg, SoanLoss loss);

/// Toy train/test splits; the test split uses a seed derived from data.seed.
std::vector<StereoSample> make_train_split(const Config& cfg);
std::vector<StereoSample> make_test_split(const Config& cfg);

/// File layout under pipeline.workdir.
struct Workspace {
    std::string root;
    explicit Workspace(const Config& cfg) : root(cfg.get("pipeline.workdir")) {}
    std::string path(const std::string& rel) const;
    std::string train_data() const { return path("data/train"); }
    std::string test_data() const { return path("data/test"); }
    std::string codec_ckpt() const { return path("ckpt/codec.ckpt"); }
    std::string sse_ckpt() const { return path("ckpt/sse.ckpt"); }
    std::string soan_ckpt(SoanLoss loss) const { return path("ckpt/soan_" + std::string(loss == SoanLoss::l1 ? "l1" : "adv") + ".ckpt"); }
    std::string train_dir() const { return path("train"); }
    std::string eval_dir() const { return path("eval"); }
};

/// Every model of the system. Parameter stores are members, so the object is pinned.
class Models {
public:
    explicit Models(const Config& cfg);
    Models(const Models&) = delete;
    Models& operator=(const Models&) = delete;

    Config cfg;
    TagVocabulary vocab;
    NoiseSchedule sched;
    ControlMode mode;

    nn::ParamStore codec_store, sse_store, soan_store, infer_soan_store, diffusion_store;
    std::unique_ptr<LatentCodec> codec;
    std::unique_ptr<StereoSemanticExtractor> sse;
    std::unique_ptr<Soan> soan;        // used to build training conditions
    std::unique_ptr<Soan> infer_soan;  // used at inference; mirrors soan unless loaded separately
    std::unique_ptr<DualUNet> unet;
    std::unique_ptr<DualControlNet> control;

    /// Parameters updated by diffusion training.
    std::vector<std::pair<std::string, Var>> trainable() const;
    /// Combined checksum of the frozen stores (codec, tagger, both SOANs).
    std::uint64_t frozen_checksum() const;

    void load_codec(const std::string& path);
    void load_sse(const std::string& path);
    /// Loads a SOAN checkpoint into the training SOAN, the inference SOAN, or both.
    void load_soan(const std::string& path, bool for_training, bool for_inference);
    void load_diffusion(const std::string& dir);
};

void save_codec(const Models& m, const std::string& path);
void save_sse(const Models& m, const std::string& path);
void save_soan(const Models& m, const std::string& path);

/// Frozen-component outputs for one training pair.
struct ConditionItem {
    Tensor z_left, z_right;          // [C,h,w]
    PromptBundle prompts;            // single item
    Tensor control_left, control_right;  // [3,H,W] control images (SOAN or bicubic)
};

/// Computes latents, prompts and control images once, before diffusion training.
std::vector<ConditionItem> build_conditions(const Models& m, const std::vector<StereoSample>& data);
/// Control images for an LR pair under the configured mode. `inference` selects
/// the inference SOAN; empty tensors when the mode is none.
StereoImagePair control_images(const Models& m, const StereoImagePair& lr, bool inference);
StereoImagePair control_images(const Models& m, const StereoImagePair& lr);

struct TrainerOptions {
    int epochs = 10;
    int batch = 8;
    nn::AdamOptions adam;
    std::uint64_t seed = 0;
    int ckpt_every = 0;  // epochs; 0 writes only the final checkpoint
    std::string ckpt_dir;  // empty disables checkpoint writing
};
TrainerOptions trainer_options(const Config& cfg);

class Trainer {
public:
    Trainer(Models& models, std::vector<ConditionItem> conditions, TrainerOptions opt);

    /// One optimizer step on the given items. RNG streams depend on (seed, step) only.
    double train_step(const std::vector<std::size_t>& items);
    /// Epoch order, a pure function of (seed, epoch).
    std::vector<std::vector<std::size_t>> epoch_batches(int epoch) const;
    /// Runs the remaining epochs; returns checkpoint directories written.
    std::vector<std::string> run();

    void save(const std::string& dir) const;
    void resume(const std::string& dir);

    long step() const { return m_step; }
    int epoch() const { return m_epoch; }
    const std::vector<double>& losses() const { return m_losses; }

private:
    Models& m_models;
    std::vector<ConditionItem> m_items;
    TrainerOptions m_opt;
    nn::Adam m_adam;
    long m_step = 0;
    int m_epoch = 0;
    std::vector<double> m_losses;
    std::uint64_t m_frozen = 0;
};

/// DDIM sampling of SR pairs for a batch of LR pairs. Item i starts from noise
/// derived from (seed, i), so results do not depend on how items are batched.
std::vector<StereoImagePair> infer(const Models& m, const std::vector<StereoImagePair>& lr, int steps,
                                   std::uint64_t seed, int batch = 8);

struct MetricRow {
    std::string pair_id;
    double psnr_l = 0, psnr_r = 0, ssim_l = 0, ssim_r = 0, made = 0;
};

struct Report {
    std::vector<MetricRow> rows;
    double psnr = 0, ssim = 0, made = 0;  // means over rows (PSNR/SSIM also over views)
};

Report evaluate(const std::vector<StereoImagePair>& pred, const std::vector<StereoImagePair>& gt,
                const std::vector<std::string>& ids, const BlockMatchOptions& bm, const SsimOptions& so = {});
void write_report(const Report& r, const std::string& csv_path, const std::string& json_path);
Report read_report_csv(const std::string& csv_path);

/// LR | SOAN | model | GT columns, one row per view for each of the first `pairs` items.
Tensor comparison_grid(const std::vector<StereoSample>& data, const std::vector<StereoImagePair>& soan_out,
                       const std::vector<StereoImagePair>& model_out, int pairs = 4);

/// Least-squares slope of a sequence against its index.
double ls_slope(const std::vector<double>& y);

}  // namespace sdsr
