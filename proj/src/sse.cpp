#include "sdsr/sse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sdsr/optim.hpp"

namespace sdsr {

TagVocabulary::TagVocabulary(std::vector<std::string> tags) : m_tags(std::move(tags)) {
    for (std::size_t i = 0; i < m_tags.size(); ++i)
        if (!m_index.emplace(m_tags[i], static_cast<int>(i)).second)
            throw std::invalid_argument("duplicate tag in vocabulary: " + m_tags[i]);
}

TagVocabulary TagVocabulary::toy() {
    return TagVocabulary({
        // shapes
        "rectangle", "disk", "triangle", "bar",
        // textures
        "checker", "stripes", "dots", "noise", "grid", "smooth",
        // colors
        "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "purple", "white", "gray", "brown", "pink",
        // background
        "background_noise", "background_gradient", "background_dark", "background_light", "background_tinted",
        // layout
        "single_object", "two_objects", "three_objects", "large_disparity", "small_disparity",
    });
}

TagVocabulary TagVocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file " + path);
    std::vector<std::string> tags;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) tags.push_back(line);
    }
    return TagVocabulary(std::move(tags));
}

void TagVocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file " + path);
    for (const auto& t : m_tags) out << t << '\n';
}

int TagVocabulary::id(const std::string& tag) const {
    auto it = m_index.find(tag);
    if (it == m_index.end()) throw std::out_of_range("unknown tag: " + tag);
    return it->second;
}

TagSet TagSet::of(std::vector<int> ids, int vocab_size) {
    for (int i : ids)
        if (i < 0 || i >= vocab_size) throw std::out_of_range("tag id outside vocabulary");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return {std::move(ids), vocab_size};
}

TagSet tag_merge(const TagSet& left, const TagSet& right) {
    if (left.vocab_size != right.vocab_size) throw std::invalid_argument("tag_merge: vocabulary mismatch");
    TagSet out{{}, left.vocab_size};
    std::set_union(left.ids.begin(), left.ids.end(), right.ids.begin(), right.ids.end(), std::back_inserter(out.ids));
    return out;
}

TagSet tags_from_logits(std::span<const double> logits, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw RangeError("tag threshold must lie in (0,1)");
    TagSet out{{}, static_cast<int>(logits.size())};
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (1.0 / (1.0 + std::exp(-logits[i])) > threshold) out.ids.push_back(static_cast<int>(i));
    return out;
}

StereoSemanticExtractor::StereoSemanticExtractor(const SseConfig& cfg, int vocab_size, nn::ParamStore& store,
                                                 Rng& rng)
    : m_cfg(cfg), m_vocab(vocab_size) {
    if (cfg.image_size % cfg.token_side) throw ShapeError("sse: image size must be a multiple of token_side");
    int size = cfg.image_size, ch = cfg.width;
    m_convs.push_back(nn::make_conv(store, "sse.enc.0", 3, ch, 3, 1, rng));
    int i = 1;
    while (size > cfg.token_side) {
        const int next = std::min(ch * 2, 64);
        m_convs.push_back(nn::make_conv(store, "sse.enc." + std::to_string(i++), ch, next, 3, 2, rng));
        ch = next;
        size /= 2;
    }
    if (size != cfg.token_side) throw ShapeError("sse: image_size / token_side must be a power of two");
    m_to_tokens = nn::make_conv(store, "sse.enc.tokens", ch, cfg.dim, 1, 1, rng);
    m_positions = store.add("sse.positions", Tensor::randn({1, token_count(), cfg.dim}, rng, 0.1));
    m_head = nn::make_linear(store, "sse.tag_head", cfg.dim, vocab_size, rng);
    m_tag_table = store.add("sse.tag_table", Tensor::randn({vocab_size + 1, cfg.dim}, rng), false);
}

ag::Var StereoSemanticExtractor::image_encode(const ag::Var& images) const {
    if (images.value().ndim() != 4 || images.dim(1) != 3 || images.dim(2) != m_cfg.image_size ||
        images.dim(3) != m_cfg.image_size)
        throw ShapeError("sse: expected [B,3," + std::to_string(m_cfg.image_size) + "," +
                         std::to_string(m_cfg.image_size) + "] images, got " + shape_str(images.shape()));
    ag::Var h = images;
    for (std::size_t i = 0; i < m_convs.size(); ++i) h = ag::silu(m_convs[i](h));
    ag::Var tokens = ag::to_tokens(m_to_tokens(h));
    const int b = images.dim(0);
    std::vector<ag::Var> pos(static_cast<std::size_t>(b), m_positions);
    return ag::add(tokens, b == 1 ? m_positions : ag::concat(pos, 0));
}

Tensor StereoSemanticExtractor::image_encode(const Tensor& image) const {
    ag::NoGradGuard guard;
    Tensor batched = image.ndim() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
    Tensor out = image_encode(ag::constant(batched)).value();
    return image.ndim() == 3 ? out.reshaped({out.dim(1), out.dim(2)}) : out;
}

ag::Var StereoSemanticExtractor::tag_logits(const ag::Var& tokens) const { return m_head(ag::mean_tokens(tokens)); }

std::vector<TagSet> StereoSemanticExtractor::tag_head(const Tensor& tokens, double threshold) const {
    ag::NoGradGuard guard;
    Tensor t = tokens.ndim() == 2 ? tokens.reshaped({1, tokens.dim(0), tokens.dim(1)}) : tokens;
    Tensor logits = tag_logits(ag::constant(t)).value();
    std::vector<TagSet> out;
    for (int b = 0; b < logits.dim(0); ++b)
        out.push_back(tags_from_logits(logits.data().subspan(static_cast<std::size_t>(b) * m_vocab, m_vocab), threshold));
    return out;
}

Tensor StereoSemanticExtractor::encode_tags(const TagSet& tags) const {
    if (tags.vocab_size != m_vocab) throw std::invalid_argument("encode_tags: vocabulary mismatch");
    const int d = m_cfg.dim;
    const Tensor& table = m_tag_table.value();
    std::vector<int> rows = tags.ids;
    if (rows.empty()) rows.push_back(m_vocab);
    Tensor out({static_cast<int>(rows.size()), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] > m_vocab) throw std::out_of_range("encode_tags: unknown tag id");
        std::copy_n(table.vec().begin() + static_cast<std::ptrdiff_t>(rows[r]) * d, d,
                    out.vec().begin() + static_cast<std::ptrdiff_t>(r) * d);
    }
    return out;
}

StereoSemanticExtractor::Extraction StereoSemanticExtractor::extract(const StereoImagePair& pair) const {
    require_same_shape(pair.left, pair.right, "sse extract");
    Extraction e;
    e.soft_left = image_encode(pair.left);
    e.soft_right = image_encode(pair.right);
    e.tags_left = tag_head(e.soft_left, m_cfg.threshold).front();
    e.tags_right = tag_head(e.soft_right, m_cfg.threshold).front();
    e.merged = tag_merge(e.tags_left, e.tags_right);
    if (m_cfg.tag_merge) {
        e.hard_left = encode_tags(e.merged);
        e.hard_right = e.hard_left;
    } else {
        e.hard_left = encode_tags(e.tags_left);
        e.hard_right = encode_tags(e.tags_right);
    }
    return e;
}

PromptBundle StereoSemanticExtractor::prompts(const StereoImagePair& pair) const {
    Extraction e = extract(pair);
    auto lift = [](const Tensor& t) { return t.reshaped({1, t.dim(0), t.dim(1)}); };
    PromptBundle p;
    p.soft_left = lift(e.soft_left);
    p.soft_right = lift(e.soft_right);
    p.hard_left = lift(e.hard_left);
    p.hard_right = lift(e.hard_right);
    p.hard_len_left = {e.hard_left.dim(0)};
    p.hard_len_right = {e.hard_right.dim(0)};
    return p;
}

TrainHistory pretrain_sse(StereoSemanticExtractor& sse, const nn::ParamStore& store,
                          const std::vector<StereoSample>& data, const SseTrainOptions& opt) {
    if (data.empty()) throw std::invalid_argument("pretrain_sse: empty dataset");
    if (opt.batch < 1 || !(opt.lr > 0.0) || opt.epochs < 0) throw RangeError("pretrain_sse: invalid options");
    TrainHistory hist;
    if (opt.epochs == 0) return hist;
    const int vocab = sse.vocab_size();
    // Every view is one training example.
    std::vector<std::pair<const Tensor*, const std::vector<int>*>> views;
    for (const StereoSample& s : data) {
        views.emplace_back(&s.lr.left, &s.tags);
        views.emplace_back(&s.lr.right, &s.tags);
    }
    nn::Adam adam(store.trainable("sse."), {.lr = opt.lr});
    std::vector<std::size_t> order(views.size());
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = make_rng(opt.seed, 0x55e, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle);
        double sum = 0.0;
        int batches = 0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(opt.batch)) {
            const std::size_t e = std::min(order.size(), s + opt.batch);
            std::vector<Tensor> imgs;
            Tensor targets({static_cast<int>(e - s), vocab});
            for (std::size_t i = s; i < e; ++i) {
                const Tensor& img = *views[order[i]].first;
                imgs.push_back(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
                for (int t : *views[order[i]].second) targets[(i - s) * vocab + t] = 1.0;
            }
            Var logits = sse.tag_logits(sse.image_encode(ag::constant(Tensor::concat0(imgs))));
            Var loss = ag::bce_with_logits(logits, targets);
            adam.zero_grad();
            ag::backward(loss);
            adam.step();
            hist.step_losses.push_back(loss.value()[0]);
            sum += loss.value()[0];
            ++batches;
        }
        hist.epoch_losses.push_back(sum / batches);
    }
    return hist;
}

double tag_accuracy(const StereoSemanticExtractor& sse, const std::vector<StereoSample>& data) {
    if (data.empty()) throw std::invalid_argument("tag_accuracy: empty dataset");
    std::size_t good = 0, total = 0;
    for (const StereoSample& s : data)
        for (const Tensor* img : {&s.lr.left, &s.lr.right}) {
            const TagSet pred = sse.tag_head(sse.image_encode(*img), sse.config().threshold).front();
            for (int t = 0; t < sse.vocab_size(); ++t) {
                const bool want = std::binary_search(s.tags.begin(), s.tags.end(), t);
                const bool got = std::binary_search(pred.ids.begin(), pred.ids.end(), t);
                good += want == got;
                ++total;
            }
        }
    return static_cast<double>(good) / static_cast<double>(total);
}

}  // namespace sdsr
