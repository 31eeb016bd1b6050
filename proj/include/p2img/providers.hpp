#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "p2img/corpus.hpp"
#include "p2img/generation.hpp"

namespace p2img {

class ProviderError : public std::runtime_error {
public:
    ProviderError(std::string message, bool retryable)
        : std::runtime_error(std::move(message)), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs fn, retrying retryable provider failures up to max_retries extra
// attempts. attempts_out, when given, receives the number of retries used.
template <typename F>
auto with_retries(int max_retries, F&& fn, int* attempts_out = nullptr) {
    int retries = 0;
    for (;;) {
        try {
            auto result = fn();
            if (attempts_out) *attempts_out = retries;
            return result;
        } catch (const ProviderError& e) {
            if (!e.retryable() || retries >= max_retries) throw;
            ++retries;
        }
    }
}

enum class EntityLabel { Person, Location, Organization, Other };
const char* to_string(EntityLabel l);
std::optional<EntityLabel> entity_label_from_string(std::string_view s);

struct EntitySpan {
    std::string surface;
    EntityLabel label = EntityLabel::Other;
    bool operator==(const EntitySpan&) const = default;
    bool operator<(const EntitySpan& o) const {
        return surface != o.surface ? surface < o.surface : label < o.label;
    }
};

struct EmotionPrediction {
    Emotion label = Emotion::Neutral;
    double confidence = 0.0;
};

class EntityTagger {
public:
    virtual ~EntityTagger() = default;
    virtual std::vector<std::vector<EntitySpan>> tag(const std::vector<std::string>& lines) = 0;
    virtual std::string descriptor_id() const = 0;
};

class EmotionClassifier {
public:
    virtual ~EmotionClassifier() = default;
    virtual std::vector<EmotionPrediction> classify(const std::vector<std::string>& lines) = 0;
    virtual std::string descriptor_id() const = 0;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct GenRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<uint64_t> seed;

    nlohmann::json to_json() const;
    uint64_t request_hash() const; // over the canonical JSON payload
};

class DescriptionGenerator {
public:
    virtual ~DescriptionGenerator() = default;
    virtual std::string generate(const GenRequest& req) = 0;
    virtual std::string descriptor_id() const = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<double> embed_text(const std::string& text) = 0;
    virtual std::string descriptor_id() const = 0;
};

// Joint text/image embedding space; image support is optional per provider.
class Embedder : public TextEmbedder {
public:
    virtual bool supports_images() const = 0;
    virtual std::vector<double> embed_image(const ImageArtifact& image) = 0;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const ImageArtifact& image) = 0;
    virtual std::string descriptor_id() const = 0;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

} // namespace p2img
