#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "p2img/providers.hpp"

namespace p2img {

// Content-addressed response store: one file per key under cache_dir, plus an
// in-memory layer. Corrupt or truncated entries read as misses and are
// overwritten by the next store. Concurrent writers of the same key are
// last-writer-wins (identical content by construction).
class ResponseCache {
public:
    explicit ResponseCache(std::string cache_dir = ""); // empty = memory only

    std::optional<std::string> lookup(const std::string& key);
    void store(const std::string& key, const std::string& value);

    static std::string make_key(const std::vector<std::string>& parts);

private:
    std::string dir_;
    std::mutex mu_;
    std::map<std::string, std::string> memory_;
};

class CachedGenerator : public DescriptionGenerator {
public:
    CachedGenerator(DescriptionGenerator& inner, ResponseCache& cache, std::string context = "")
        : inner_(inner), cache_(cache), context_(std::move(context)) {}

    std::string generate(const GenRequest& req) override;
    std::string descriptor_id() const override { return inner_.descriptor_id(); }

private:
    DescriptionGenerator& inner_;
    ResponseCache& cache_;
    std::string context_; // e.g. template hash, part of the key
};

class CachedTagger : public EntityTagger {
public:
    CachedTagger(EntityTagger& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::vector<std::vector<EntitySpan>> tag(const std::vector<std::string>& lines) override;
    std::string descriptor_id() const override { return inner_.descriptor_id(); }

private:
    EntityTagger& inner_;
    ResponseCache& cache_;
};

class CachedClassifier : public EmotionClassifier {
public:
    CachedClassifier(EmotionClassifier& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::vector<EmotionPrediction> classify(const std::vector<std::string>& lines) override;
    std::string descriptor_id() const override { return inner_.descriptor_id(); }

private:
    EmotionClassifier& inner_;
    ResponseCache& cache_;
};

class CachedEmbedder : public Embedder {
public:
    CachedEmbedder(Embedder& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::vector<double> embed_text(const std::string& text) override;
    std::vector<double> embed_image(const ImageArtifact& image) override;
    bool supports_images() const override { return inner_.supports_images(); }
    std::string descriptor_id() const override { return inner_.descriptor_id(); }

private:
    Embedder& inner_;
    ResponseCache& cache_;
};

class CachedCaptioner : public Captioner {
public:
    CachedCaptioner(Captioner& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}
    std::string caption(const ImageArtifact& image) override;
    std::string descriptor_id() const override { return inner_.descriptor_id(); }

private:
    Captioner& inner_;
    ResponseCache& cache_;
};

// Stable identity for an image payload used in cache keys.
std::string image_cache_token(const ImageArtifact& image);

} // namespace p2img
