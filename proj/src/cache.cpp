#include "p2img/cache.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "p2img/hash.hpp"

namespace fs = std::filesystem;

namespace p2img {

ResponseCache::ResponseCache(std::string cache_dir) : dir_(std::move(cache_dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
}

std::string ResponseCache::make_key(const std::vector<std::string>& parts) {
    uint64_t h = kFnvOffset;
    for (const auto& p : parts) {
        h = fnv1a64(p, h);
        h = fnv1a64(std::string_view("\x1f", 1), h);
    }
    return hex64(h);
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = memory_.find(key);
        if (it != memory_.end()) return it->second;
    }
    if (dir_.empty()) return std::nullopt;
    fs::path path = fs::path(dir_) / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(buf.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("schema", "") != "cache-entry/v1" ||
        j.value("key", "") != key || !j.contains("value") || !j.at("value").is_string())
        return std::nullopt; // corrupt entry reads as a miss
    std::string value = j.at("value").get<std::string>();
    {
        std::lock_guard<std::mutex> lock(mu_);
        memory_[key] = value;
    }
    return value;
}

void ResponseCache::store(const std::string& key, const std::string& value) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        memory_[key] = value;
    }
    if (dir_.empty()) return;
    nlohmann::json j = {{"schema", "cache-entry/v1"}, {"key", key}, {"value", value}};
    fs::path path = fs::path(dir_) / (key + ".json");
    fs::path tmp = fs::path(dir_) / (key + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << j.dump();
    }
    fs::rename(tmp, path);
}

std::string CachedGenerator::generate(const GenRequest& req) {
    std::string key =
        ResponseCache::make_key({descriptor_id(), context_, "generate", req.to_json().dump()});
    if (auto hit = cache_.lookup(key)) return *hit;
    std::string result = inner_.generate(req);
    cache_.store(key, result);
    return result;
}

namespace {

std::string lines_payload(const std::vector<std::string>& lines) {
    return nlohmann::json(lines).dump();
}

std::string vector_to_string(const std::vector<double>& v) {
    return nlohmann::json(v).dump();
}

std::vector<double> vector_from_string(const std::string& s) {
    nlohmann::json j = nlohmann::json::parse(s);
    return j.get<std::vector<double>>();
}

} // namespace

std::vector<std::vector<EntitySpan>> CachedTagger::tag(const std::vector<std::string>& lines) {
    std::string key = ResponseCache::make_key({descriptor_id(), "tag", lines_payload(lines)});
    if (auto hit = cache_.lookup(key)) {
        nlohmann::json j = nlohmann::json::parse(*hit);
        std::vector<std::vector<EntitySpan>> out;
        for (const auto& line : j) {
            std::vector<EntitySpan> spans;
            for (const auto& s : line) {
                auto label = entity_label_from_string(s.at("label").get<std::string>());
                spans.push_back({s.at("surface").get<std::string>(),
                                 label.value_or(EntityLabel::Other)});
            }
            out.push_back(std::move(spans));
        }
        return out;
    }
    auto result = inner_.tag(lines);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& line : result) {
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : line) spans.push_back({{"surface", s.surface}, {"label", to_string(s.label)}});
        j.push_back(spans);
    }
    cache_.store(key, j.dump());
    return result;
}

std::vector<EmotionPrediction> CachedClassifier::classify(const std::vector<std::string>& lines) {
    std::string key = ResponseCache::make_key({descriptor_id(), "classify", lines_payload(lines)});
    if (auto hit = cache_.lookup(key)) {
        nlohmann::json j = nlohmann::json::parse(*hit);
        std::vector<EmotionPrediction> out;
        for (const auto& e : j) {
            auto emo = emotion_from_string(e.at("label").get<std::string>());
            out.push_back({emo.value_or(Emotion::Neutral), e.at("confidence").get<double>()});
        }
        return out;
    }
    auto result = inner_.classify(lines);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : result)
        j.push_back({{"label", to_string(e.label)}, {"confidence", e.confidence}});
    cache_.store(key, j.dump());
    return result;
}

std::string image_cache_token(const ImageArtifact& image) {
    uint64_t h = kFnvOffset;
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(image.image.pixels.data()),
                                 image.image.pixels.size()),
                h);
    h = fnv1a64(image.description, h);
    return hex64(h) + ":" + std::to_string(image.image.width) + "x" +
           std::to_string(image.image.height);
}

std::vector<double> CachedEmbedder::embed_text(const std::string& text) {
    std::string key = ResponseCache::make_key({descriptor_id(), "embed_text", text});
    if (auto hit = cache_.lookup(key)) return vector_from_string(*hit);
    auto v = inner_.embed_text(text);
    cache_.store(key, vector_to_string(v));
    return v;
}

std::vector<double> CachedEmbedder::embed_image(const ImageArtifact& image) {
    std::string key =
        ResponseCache::make_key({descriptor_id(), "embed_image", image_cache_token(image)});
    if (auto hit = cache_.lookup(key)) return vector_from_string(*hit);
    auto v = inner_.embed_image(image);
    cache_.store(key, vector_to_string(v));
    return v;
}

std::string CachedCaptioner::caption(const ImageArtifact& image) {
    std::string key =
        ResponseCache::make_key({descriptor_id(), "caption", image_cache_token(image)});
    if (auto hit = cache_.lookup(key)) return *hit;
    std::string c = inner_.caption(image);
    cache_.store(key, c);
    return c;
}

} // namespace p2img
