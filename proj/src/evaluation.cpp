#include "p2img/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace p2img {

std::string emotion_prompt(Emotion e) {
    return std::string("a scene expressing ") + to_string(e);
}

double blip_alignment(const ImageArtifact& image, const std::string& instruction,
                      Captioner& captioner, Embedder& embedder) {
    if (instruction.empty()) throw std::invalid_argument("blip_alignment: empty instruction");
    std::string caption = captioner.caption(image);
    if (caption.empty()) throw ProviderError("blip_alignment: captioner returned empty text", false);
    return cosine_similarity(embedder.embed_text(caption), embedder.embed_text(instruction));
}

double longclip_alignment(const std::string& poem_text, const ImageArtifact& image,
                          Embedder& embedder) {
    if (poem_text.empty()) throw std::invalid_argument("longclip_alignment: empty poem text");
    if (!embedder.supports_images())
        throw ConfigError("longclip_alignment: embedder has no joint text/image space");
    return cosine_similarity(embedder.embed_text(poem_text), embedder.embed_image(image));
}

double emotion_alignment(const ImageArtifact& image, Emotion gold, Embedder& embedder) {
    if (!embedder.supports_images())
        throw ConfigError("emotion_alignment: embedder has no joint text/image space");
    return cosine_similarity(embedder.embed_image(image), embedder.embed_text(emotion_prompt(gold)));
}

std::optional<double> character_consistency(const std::vector<ImageArtifact>& images,
                                            Embedder& embedder) {
    if (images.size() < 2) return std::nullopt;
    if (!embedder.supports_images())
        throw ConfigError("character_consistency: embedder has no joint text/image space");
    std::vector<std::vector<double>> vecs;
    vecs.reserve(images.size());
    for (const auto& img : images) vecs.push_back(embedder.embed_image(img));
    double sum = 0.0;
    int pairs = 0;
    for (size_t a = 0; a < vecs.size(); ++a)
        for (size_t b = a + 1; b < vecs.size(); ++b) {
            sum += cosine_similarity(vecs[a], vecs[b]);
            ++pairs;
        }
    return sum / pairs;
}

namespace {

int approach_rank(const std::string& approach) {
    if (approach == "poemtale") return 0;
    if (approach == "segments_only") return 1;
    if (approach == "single_image") return 2;
    return 3;
}

} // namespace

ReportTable aggregate_report(const std::vector<MetricReport>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate_report: no runs");
    for (const auto& r : runs)
        if (r.schema != kMetricSchema)
            throw std::invalid_argument("aggregate_report: mixed schema versions ('" + r.schema +
                                        "' vs '" + kMetricSchema + "')");

    std::map<std::pair<std::string, std::string>, std::vector<const MetricReport*>> groups;
    for (const auto& r : runs) groups[{r.approach, r.model}].push_back(&r);

    ReportTable table;
    for (const auto& [key, members] : groups) {
        ReportRow row;
        row.approach = key.first;
        row.model = key.second;
        row.poem_count = static_cast<int>(members.size());
        double consistency_sum = 0.0;
        int consistency_n = 0;
        for (const MetricReport* m : members) {
            row.blip_score += m->blip_score;
            row.longclip_score += m->longclip_score;
            row.emotion_score += m->emotion_score;
            if (m->consistency_score) {
                consistency_sum += *m->consistency_score;
                ++consistency_n;
            }
        }
        row.blip_score /= row.poem_count;
        row.longclip_score /= row.poem_count;
        row.emotion_score /= row.poem_count;
        if (consistency_n > 0) row.consistency_score = consistency_sum / consistency_n;
        table.rows.push_back(std::move(row));
    }
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        int ra = approach_rank(a.approach), rb = approach_rank(b.approach);
        if (ra != rb) return ra < rb;
        return a.model < b.model;
    });
    return table;
}

nlohmann::json metric_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["schema"] = r.schema;
    j["poem_id"] = r.poem_id;
    j["approach"] = r.approach;
    j["model"] = r.model;
    j["blip_score"] = r.blip_score;
    j["longclip_score"] = r.longclip_score;
    j["emotion_score"] = r.emotion_score;
    if (r.consistency_score)
        j["consistency_score"] = *r.consistency_score;
    else
        j["consistency_score"] = nullptr;
    return j;
}

MetricReport metric_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.schema = j.value("schema", "");
    r.poem_id = j.value("poem_id", "");
    r.approach = j.at("approach").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.blip_score = j.at("blip_score").get<double>();
    r.longclip_score = j.at("longclip_score").get<double>();
    r.emotion_score = j.at("emotion_score").get<double>();
    if (j.contains("consistency_score") && !j.at("consistency_score").is_null())
        r.consistency_score = j.at("consistency_score").get<double>();
    return r;
}

nlohmann::json report_to_json(const ReportTable& table) {
    nlohmann::json j;
    j["schema"] = "report/v1";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row;
        row["approach"] = r.approach;
        row["model"] = r.model;
        row["poem_count"] = r.poem_count;
        row["blip_score"] = r.blip_score;
        row["longclip_score"] = r.longclip_score;
        row["emotion_score"] = r.emotion_score;
        if (r.consistency_score)
            row["consistency_score"] = *r.consistency_score;
        else
            row["consistency_score"] = nullptr;
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j;
}

std::string render_report_text(const ReportTable& table) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };

    std::vector<std::array<std::string, 6>> cells;
    cells.push_back({"APPROACH", "MODEL", "BLIP", "LONG-CLIP", "EMOTION", "CHARACTER CONSISTENCY"});
    for (const auto& r : table.rows)
        cells.push_back({r.approach, r.model, fmt(r.blip_score), fmt(r.longclip_score),
                         fmt(r.emotion_score),
                         r.consistency_score ? fmt(*r.consistency_score) : std::string("/")});

    std::array<size_t, 6> widths{};
    for (const auto& row : cells)
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    std::string out;
    for (size_t i = 0; i < cells.size(); ++i) {
        std::string prev_approach = i > 1 ? cells[i - 1][0] : "";
        for (size_t c = 0; c < cells[i].size(); ++c) {
            std::string cell = cells[i][c];
            // Repeat the approach label only on its first row of the group.
            if (c == 0 && i > 1 && cell == prev_approach) cell = "";
            out += cell;
            out.append(widths[c] - cell.size() + 2, ' ');
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out.push_back('\n');
        if (i == 0) {
            size_t total = 0;
            for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + 2;
            out.append(total - 2, '-');
            out.push_back('\n');
        }
    }
    return out;
}

} // namespace p2img
