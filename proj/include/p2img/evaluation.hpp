#pragma once

#include <optional>
#include <string>
#include <vector>

#include "p2img/corpus.hpp"
#include "p2img/generation.hpp"
#include "p2img/providers.hpp"

namespace p2img {

// Fixed, versioned prompt for emotion alignment.
constexpr const char* kEmotionPromptVersion = "emotion-prompt/v1";
std::string emotion_prompt(Emotion e); // "a scene expressing <emotion>"

// caption = captioner(image); cosine(embed(caption), embed(instruction)).
double blip_alignment(const ImageArtifact& image, const std::string& instruction,
                      Captioner& captioner, Embedder& embedder);

// Cosine between the poem's text embedding and the image embedding; requires
// a joint-space embedder.
double longclip_alignment(const std::string& poem_text, const ImageArtifact& image,
                          Embedder& embedder);

double emotion_alignment(const ImageArtifact& image, Emotion gold, Embedder& embedder);

// Mean over all unordered pairs of image-embedding cosines; nullopt (renders
// '/') for fewer than two images.
std::optional<double> character_consistency(const std::vector<ImageArtifact>& images,
                                            Embedder& embedder);

constexpr const char* kMetricSchema = "metric-report/v1";

struct MetricReport {
    std::string schema = kMetricSchema;
    std::string poem_id;
    std::string approach; // poemtale | segments_only | single_image
    std::string model;
    double blip_score = 0.0;
    double longclip_score = 0.0;
    double emotion_score = 0.0;
    std::optional<double> consistency_score; // absent for single-image runs
};

struct ReportRow {
    std::string approach;
    std::string model;
    int poem_count = 0;
    double blip_score = 0.0;
    double longclip_score = 0.0;
    double emotion_score = 0.0;
    std::optional<double> consistency_score;
};

struct ReportTable {
    std::vector<ReportRow> rows; // approach-major, model within approach
};

// Groups runs by (approach, model) and averages per-poem scores. Approaches
// render in pipeline order (poemtale, segments_only, single_image), models
// alphabetically within each. Mixed schema versions are an error.
ReportTable aggregate_report(const std::vector<MetricReport>& runs);

nlohmann::json report_to_json(const ReportTable& table);
nlohmann::json metric_to_json(const MetricReport& r);
MetricReport metric_from_json(const nlohmann::json& j);

// Aligned text table; not-applicable consistency cells print '/'.
std::string render_report_text(const ReportTable& table);

} // namespace p2img
