#include "p2img/providers.hpp"

#include <cmath>

#include "p2img/hash.hpp"

namespace p2img {

const char* to_string(EntityLabel l) {
    switch (l) {
        case EntityLabel::Person: return "PERSON";
        case EntityLabel::Location: return "LOCATION";
        case EntityLabel::Organization: return "ORGANIZATION";
        case EntityLabel::Other: return "OTHER";
    }
    return "OTHER";
}

std::optional<EntityLabel> entity_label_from_string(std::string_view s) {
    if (s == "PERSON") return EntityLabel::Person;
    if (s == "LOCATION") return EntityLabel::Location;
    if (s == "ORGANIZATION") return EntityLabel::Organization;
    if (s == "OTHER") return EntityLabel::Other;
    return std::nullopt;
}

nlohmann::json GenRequest::to_json() const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json j = {{"model", model}, {"messages", msgs}, {"temperature", temperature}};
    if (seed) j["seed"] = *seed;
    return j;
}

uint64_t GenRequest::request_hash() const {
    return fnv1a64(to_json().dump());
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace p2img
