#pragma once

#include <atomic>
#include <map>
#include <string>
#include <vector>

#include "p2img/providers.hpp"

namespace p2img {

// Deterministic word-boundary gazetteer; entries may span up to three words
// and match case-insensitively.
class GazetteerTagger : public EntityTagger {
public:
    explicit GazetteerTagger(std::map<std::string, EntityLabel> entries);
    static std::map<std::string, EntityLabel> default_entries();

    std::vector<std::vector<EntitySpan>> tag(const std::vector<std::string>& lines) override;
    std::string descriptor_id() const override { return descriptor_; }

    uint64_t live_calls() const { return calls_.load(); }

private:
    std::map<std::string, EntityLabel> entries_;
    std::string descriptor_;
    std::atomic<uint64_t> calls_{0};
};

// Keyword-count emotion lexicon. The emotion with most keyword hits wins,
// ties resolve in enum order; no hits -> neutral with confidence 0.
class LexiconClassifier : public EmotionClassifier {
public:
    explicit LexiconClassifier(std::map<Emotion, std::vector<std::string>> lexicon);
    static std::map<Emotion, std::vector<std::string>> default_lexicon();

    std::vector<EmotionPrediction> classify(const std::vector<std::string>& lines) override;
    std::string descriptor_id() const override { return descriptor_; }

    uint64_t live_calls() const { return calls_.load(); }

private:
    std::map<Emotion, std::vector<std::string>> lexicon_;
    std::string descriptor_;
    std::atomic<uint64_t> calls_{0};
};

// Offline description generator. It understands the default prompt templates:
// stage-1 prompts yield "A vivid scene of <segment>", refinement prompts
// extend the previous description with a deterministic embellishment. Prompts
// without the template markers echo their last non-empty line.
class StubGenerator : public DescriptionGenerator {
public:
    std::string generate(const GenRequest& req) override;
    std::string descriptor_id() const override { return "stub-generator/v1"; }

    uint64_t live_calls() const { return calls_.load(); }

private:
    std::atomic<uint64_t> calls_{0};
};

// Seeded random projection of character-trigram hash features to 64
// dimensions, L2-normalized. Text and image share the space: a toy artifact
// embeds as its generating description, other artifacts as their pixel bytes.
class StubEmbedder : public Embedder {
public:
    enum class Mode { CharNgram, WordBag };
    explicit StubEmbedder(uint64_t seed = kDefaultSeed, Mode mode = Mode::CharNgram);

    std::vector<double> embed_text(const std::string& text) override;
    std::vector<double> embed_image(const ImageArtifact& image) override;
    bool supports_images() const override { return true; }
    std::string descriptor_id() const override;

    uint64_t live_calls() const { return calls_.load(); }

    static constexpr uint64_t kDefaultSeed = 0x70326931ULL;
    static constexpr int kDim = 64;

private:
    uint64_t seed_;
    Mode mode_;
    std::atomic<uint64_t> calls_{0};
};

class StubCaptioner : public Captioner {
public:
    std::string caption(const ImageArtifact& image) override;
    std::string descriptor_id() const override { return "stub-captioner/v1"; }

    uint64_t live_calls() const { return calls_.load(); }

private:
    std::atomic<uint64_t> calls_{0};
};

std::vector<std::string> lowercase_words(const std::string& text);

} // namespace p2img
