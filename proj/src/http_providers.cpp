#include "p2img/http_providers.hpp"

#include "httplib.h"

#include "p2img/base64.hpp"
#include "p2img/hash.hpp"
#include "p2img/png.hpp"

namespace p2img {

nlohmann::json http_post_json(const HttpOptions& opts, const std::string& path,
                              const nlohmann::json& body) {
    httplib::Client client(opts.base_url);
    client.set_connection_timeout(opts.timeout_seconds);
    client.set_read_timeout(opts.timeout_seconds);
    httplib::Headers headers;
    if (!opts.auth_token.empty()) headers.emplace("Authorization", "Bearer " + opts.auth_token);

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res)
        throw ProviderError("http: no response from " + opts.base_url + path, /*retryable=*/true);
    if (res->status >= 500)
        throw ProviderError("http: status " + std::to_string(res->status) + " from " + path,
                            /*retryable=*/true);
    if (res->status != 200)
        throw ProviderError("http: status " + std::to_string(res->status) + " from " + path,
                            /*retryable=*/false);
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded())
        throw ProviderError("http: response from " + path + " is not JSON", /*retryable=*/false);
    return j;
}

HttpAnnotateClient::HttpAnnotateClient(HttpOptions opts) : opts_(std::move(opts)) {}

std::string HttpAnnotateClient::descriptor_id() const {
    return "http-annotate/" + opts_.base_url;
}

nlohmann::json HttpAnnotateClient::annotate(const std::vector<std::string>& lines) {
    std::string payload = nlohmann::json({{"lines", lines}}).dump();
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = memo_.find(payload);
        if (it != memo_.end()) return nlohmann::json::parse(it->second);
    }
    nlohmann::json response = with_retries(opts_.max_retries, [&] {
        calls_.fetch_add(1);
        return http_post_json(opts_, "/annotate", nlohmann::json({{"lines", lines}}));
    });
    {
        std::lock_guard<std::mutex> lock(mu_);
        memo_[payload] = response.dump();
    }
    return response;
}

std::vector<std::vector<EntitySpan>> HttpAnnotateClient::tag(const std::vector<std::string>& lines) {
    nlohmann::json r = annotate(lines);
    if (!r.contains("entities") || !r.at("entities").is_array() ||
        r.at("entities").size() != lines.size())
        throw ProviderError("annotate: malformed 'entities'", false);
    std::vector<std::vector<EntitySpan>> out;
    for (const auto& line : r.at("entities")) {
        std::vector<EntitySpan> spans;
        for (const auto& s : line) {
            auto label = entity_label_from_string(s.at("label").get<std::string>());
            if (!label) throw ProviderError("annotate: unknown entity label", false);
            spans.push_back({s.at("surface").get<std::string>(), *label});
        }
        out.push_back(std::move(spans));
    }
    return out;
}

std::vector<EmotionPrediction> HttpAnnotateClient::classify(const std::vector<std::string>& lines) {
    nlohmann::json r = annotate(lines);
    if (!r.contains("emotions") || !r.at("emotions").is_array() ||
        r.at("emotions").size() != lines.size())
        throw ProviderError("annotate: malformed 'emotions'", false);
    std::vector<EmotionPrediction> out;
    for (const auto& e : r.at("emotions")) {
        auto emo = emotion_from_string(e.at("label").get<std::string>());
        if (!emo) throw ProviderError("annotate: unknown emotion label", false);
        out.push_back({*emo, e.at("confidence").get<double>()});
    }
    return out;
}

HttpChatGenerator::HttpChatGenerator(HttpOptions opts, std::string path)
    : opts_(std::move(opts)), path_(std::move(path)) {}

std::string HttpChatGenerator::descriptor_id() const {
    return "http-generator/" + opts_.base_url + path_;
}

std::string HttpChatGenerator::generate(const GenRequest& req) {
    nlohmann::json r = with_retries(opts_.max_retries, [&] {
        calls_.fetch_add(1);
        return http_post_json(opts_, path_, req.to_json());
    });
    if (!r.contains("text") || !r.at("text").is_string())
        throw ProviderError("generator: response has no 'text'", false);
    return r.at("text").get<std::string>();
}

HttpEmbedderClient::HttpEmbedderClient(HttpOptions opts, bool joint_space)
    : opts_(std::move(opts)), joint_space_(joint_space) {}

std::string HttpEmbedderClient::descriptor_id() const {
    return "http-embedder/" + opts_.base_url;
}

namespace {
std::vector<double> parse_vector(const nlohmann::json& r) {
    if (!r.contains("vector") || !r.at("vector").is_array())
        throw ProviderError("embedder: response has no 'vector'", false);
    return r.at("vector").get<std::vector<double>>();
}
} // namespace

std::vector<double> HttpEmbedderClient::embed_text(const std::string& text) {
    nlohmann::json r = with_retries(opts_.max_retries, [&] {
        calls_.fetch_add(1);
        return http_post_json(opts_, "/embed_text", nlohmann::json({{"text", text}}));
    });
    return parse_vector(r);
}

std::vector<double> HttpEmbedderClient::embed_image(const ImageArtifact& image) {
    if (!joint_space_)
        throw ConfigError("embedder at " + opts_.base_url + " is text-only; a joint "
                          "text/image space is required for image metrics");
    std::string b64 = base64_encode(image.png());
    nlohmann::json r = with_retries(opts_.max_retries, [&] {
        calls_.fetch_add(1);
        return http_post_json(opts_, "/embed_image", nlohmann::json({{"image_b64", b64}}));
    });
    return parse_vector(r);
}

HttpCaptionerClient::HttpCaptionerClient(HttpOptions opts) : opts_(std::move(opts)) {}

std::string HttpCaptionerClient::descriptor_id() const {
    return "http-captioner/" + opts_.base_url;
}

std::string HttpCaptionerClient::caption(const ImageArtifact& image) {
    std::string b64 = base64_encode(image.png());
    nlohmann::json r = with_retries(opts_.max_retries, [&] {
        calls_.fetch_add(1);
        return http_post_json(opts_, "/caption", nlohmann::json({{"image_b64", b64}}));
    });
    if (!r.contains("text") || !r.at("text").is_string())
        throw ProviderError("captioner: response has no 'text'", false);
    return r.at("text").get<std::string>();
}

HttpImageBackend::HttpImageBackend(HttpOptions opts, std::string model)
    : opts_(std::move(opts)), model_(std::move(model)) {}

std::vector<GenerationOutcome> HttpImageBackend::run(const GenerationRequest& req) {
    std::vector<GenerationOutcome> outcomes;
    std::vector<std::string> reference_ids;
    for (const auto& prompt : req.prompts) {
        GenerationOutcome o;
        o.segment_id = prompt.segment_id;
        nlohmann::json body = {{"prompt", prompt.text},
                               {"seed", req.seed},
                               {"width", req.width},
                               {"height", req.height},
                               {"consistent", req.consistency},
                               {"reference_ids", reference_ids}};
        if (!req.style_directives.empty()) body["style"] = req.style_directives;
        if (!model_.empty()) body["model"] = model_;
        try {
            int retries = 0;
            nlohmann::json r = with_retries(
                opts_.max_retries,
                [&] {
                    calls_.fetch_add(1);
                    return http_post_json(opts_, "/generate", body);
                },
                &retries);
            if (!r.contains("image_b64") || !r.at("image_b64").is_string())
                throw ProviderError("backend: response has no 'image_b64'", false);

            ImageArtifact art;
            art.segment_id = prompt.segment_id;
            art.description = prompt.text;
            art.png_bytes = base64_decode(r.at("image_b64").get<std::string>());
            auto [w, h] = png_dimensions(art.png_bytes);
            if (w != req.width || h != req.height)
                throw ProviderError("backend: image is " + std::to_string(w) + "x" +
                                        std::to_string(h) + ", requested " +
                                        std::to_string(req.width) + "x" + std::to_string(req.height),
                                    false);
            try {
                art.image = decode_png_rgb8(art.png_bytes);
            } catch (const std::exception&) {
                // Keep the compressed bytes; dimensions were already validated.
                art.image.width = w;
                art.image.height = h;
            }
            if (r.contains("meta") && r.at("meta").is_object())
                for (const auto& [k, v] : r.at("meta").items())
                    art.backend_meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
            art.backend_meta["model"] = model_;
            art.backend_meta["retries"] = std::to_string(retries);
            o.artifact = std::move(art);
            if (req.consistency) reference_ids.push_back(prompt.segment_id);
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

} // namespace p2img
