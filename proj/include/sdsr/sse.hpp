#pragma once

// Stereo semantic extractor: one shared-weight image encoder produces per-view
// soft token sequences, a tag head turns each view's tokens into a tag set,
// and the two sets are merged by union into the hard prompt shared by both views.

#include <string>
#include <unordered_map>
#include <vector>

#include "sdsr/degradation.hpp"
#include "sdsr/nn.hpp"
#include "sdsr/types.hpp"

namespace sdsr {

class TagVocabulary {
public:
    TagVocabulary() = default;
    explicit TagVocabulary(std::vector<std::string> tags);

    /// The 32-word vocabulary matching the synthetic scene generator.
    static TagVocabulary toy();
    /// Plain text, one tag per line; line number is the id.
    static TagVocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int size() const { return static_cast<int>(m_tags.size()); }
    const std::string& tag(int id) const { return m_tags.at(static_cast<std::size_t>(id)); }
    int id(const std::string& tag) const;
    const std::vector<std::string>& tags() const { return m_tags; }

private:
    std::vector<std::string> m_tags;
    std::unordered_map<std::string, int> m_index;
};

/// Sorted, duplicate-free set of vocabulary ids.
struct TagSet {
    std::vector<int> ids;
    int vocab_size = 0;

    static TagSet of(std::vector<int> ids, int vocab_size);
    bool empty() const { return ids.empty(); }
    bool operator==(const TagSet&) const = default;
};

/// Union of two tag sets over the same vocabulary.
TagSet tag_merge(const TagSet& left, const TagSet& right);

/// Ids whose sigmoid score exceeds the threshold.
TagSet tags_from_logits(std::span<const double> logits, double threshold);

struct SseConfig {
    int image_size = 16;
    int token_side = 4;
    int dim = 32;
    int width = 16;
    double threshold = 0.68;
    bool tag_merge = true;
};

class StereoSemanticExtractor {
public:
    StereoSemanticExtractor(const SseConfig& cfg, int vocab_size, nn::ParamStore& store, Rng& rng);

    const SseConfig& config() const { return m_cfg; }
    int vocab_size() const { return m_vocab; }
    int token_count() const { return m_cfg.token_side * m_cfg.token_side; }

    /// [B,3,H,W] -> soft tokens [B, token_count, dim].
    ag::Var image_encode(const ag::Var& images) const;
    Tensor image_encode(const Tensor& image) const;
    /// Soft tokens -> tag logits [B, vocab].
    ag::Var tag_logits(const ag::Var& tokens) const;
    /// Thresholded multi-label prediction for each batch item.
    std::vector<TagSet> tag_head(const Tensor& tokens, double threshold) const;
    /// One embedding row per tag; the empty set maps to the single null token. Returns [n, dim].
    Tensor encode_tags(const TagSet& tags) const;

    struct Extraction {
        Tensor soft_left, soft_right;  // [L, D]
        TagSet tags_left, tags_right, merged;
        Tensor hard_left, hard_right;  // [n, D]
    };
    Extraction extract(const StereoImagePair& pair) const;
    /// Single-item prompt bundle; respects config().tag_merge.
    PromptBundle prompts(const StereoImagePair& pair) const;

private:
    SseConfig m_cfg;
    int m_vocab;
    std::vector<nn::Conv2d> m_convs;
    nn::Conv2d m_to_tokens;
    ag::Var m_positions;
    nn::Linear m_head;
    ag::Var m_tag_table;  // [vocab + 1, dim]; last row is the null token
};

struct SseTrainOptions {
    int epochs = 20;
    int batch = 16;
    double lr = 2e-3;
    std::uint64_t seed = 0;
};

/// Multi-label BCE training of the encoder and tag head on both LR views of every
/// sample (each view carries its scene's tags). The tag embedding table stays fixed.
TrainHistory pretrain_sse(StereoSemanticExtractor& sse, const nn::ParamStore& store,
                          const std::vector<StereoSample>& data, const SseTrainOptions& opt);

/// Fraction of (view, tag) decisions that match the ground truth at the configured threshold.
double tag_accuracy(const StereoSemanticExtractor& sse, const std::vector<StereoSample>& data);

}  // namespace sdsr
