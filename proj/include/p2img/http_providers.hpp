#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "p2img/providers.hpp"

namespace p2img {

struct HttpOptions {
    std::string base_url; // e.g. http://localhost:8080
    std::string auth_token;
    int max_retries = 2;
    int timeout_seconds = 30;
};

// POST /annotate {lines:[...]} -> {entities:[[{surface,label}]],
// emotions:[{label,confidence}]}. One instance serves as both tagger and
// classifier; the raw response per payload is memoized so using both
// interfaces on the same lines costs one live call.
class HttpAnnotateClient : public EntityTagger, public EmotionClassifier {
public:
    explicit HttpAnnotateClient(HttpOptions opts);

    std::vector<std::vector<EntitySpan>> tag(const std::vector<std::string>& lines) override;
    std::vector<EmotionPrediction> classify(const std::vector<std::string>& lines) override;
    std::string descriptor_id() const override;

    uint64_t live_calls() const { return calls_.load(); }

private:
    nlohmann::json annotate(const std::vector<std::string>& lines);

    HttpOptions opts_;
    std::mutex mu_;
    std::map<std::string, std::string> memo_;
    std::atomic<uint64_t> calls_{0};
};

// Chat-completion style generator: POST {model, messages, temperature, seed?}
// -> {text}.
class HttpChatGenerator : public DescriptionGenerator {
public:
    HttpChatGenerator(HttpOptions opts, std::string path = "/v1/chat");

    std::string generate(const GenRequest& req) override;
    std::string descriptor_id() const override;

    uint64_t live_calls() const { return calls_.load(); }

private:
    HttpOptions opts_;
    std::string path_;
    std::atomic<uint64_t> calls_{0};
};

// POST /embed_text {text} -> {vector}; POST /embed_image {image_b64} ->
// {vector}. Image support requires the provider to expose /embed_image.
class HttpEmbedderClient : public Embedder {
public:
    HttpEmbedderClient(HttpOptions opts, bool joint_space);

    std::vector<double> embed_text(const std::string& text) override;
    std::vector<double> embed_image(const ImageArtifact& image) override;
    bool supports_images() const override { return joint_space_; }
    std::string descriptor_id() const override;

    uint64_t live_calls() const { return calls_.load(); }

private:
    HttpOptions opts_;
    bool joint_space_;
    std::atomic<uint64_t> calls_{0};
};

// POST /caption {image_b64} -> {text}.
class HttpCaptionerClient : public Captioner {
public:
    explicit HttpCaptionerClient(HttpOptions opts);

    std::string caption(const ImageArtifact& image) override;
    std::string descriptor_id() const override;

    uint64_t live_calls() const { return calls_.load(); }

private:
    HttpOptions opts_;
    std::atomic<uint64_t> calls_{0};
};

// POST /generate {prompt, seed, width, height, consistent, reference_ids}
// -> {image_b64, meta}. Sequential within a sequence; retry count per
// artifact is recorded in backend_meta["retries"].
class HttpImageBackend : public ImageBackend {
public:
    HttpImageBackend(HttpOptions opts, std::string model);

    std::vector<GenerationOutcome> run(const GenerationRequest& req) override;
    std::string name() const override { return "http:" + model_; }

    uint64_t live_calls() const { return calls_.load(); }

private:
    HttpOptions opts_;
    std::string model_;
    std::atomic<uint64_t> calls_{0};
};

// POST to base_url+path with a JSON body; 5xx and transport failures raise
// retryable ProviderError, other non-200s are fatal.
nlohmann::json http_post_json(const HttpOptions& opts, const std::string& path,
                              const nlohmann::json& body);

} // namespace p2img
