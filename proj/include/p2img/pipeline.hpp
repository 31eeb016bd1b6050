#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "p2img/cache.hpp"
#include "p2img/evaluation.hpp"
#include "p2img/generation.hpp"
#include "p2img/http_providers.hpp"
#include "p2img/refinement.hpp"
#include "p2img/segmentation.hpp"
#include "p2img/stub_providers.hpp"

namespace p2img {

enum class Approach { PoemTale, SegmentsOnly, SingleImage };
const char* to_string(Approach a);
Approach approach_from_string(const std::string& s); // throws ConfigError

struct ProviderDescriptor {
    std::string kind = "stub"; // stub | http | cassette (generator only)
    std::string endpoint;
    std::map<std::string, std::string> options;
};

struct RunConfig {
    std::string corpus_path;
    Approach approach = Approach::PoemTale;
    BackendDescriptor backend;
    std::map<std::string, ProviderDescriptor> providers; // tagger, classifier, generator,
                                                         // scorer, embedder, captioner
    MsprConfig mspr;
    SamplingPolicy sampling;
    BoundaryPolicy policy;
    uint64_t seed = 0;
    std::string output_dir = "out";
    std::string cache_dir;
    int width = 64;
    int height = 64;
    int workers = 1;
    bool gallery = false;

    static RunConfig from_json(const nlohmann::json& j); // throws ConfigError
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    uint64_t config_hash() const;
};

// Concrete providers built from descriptors, each behind the shared
// content-addressed response cache.
struct ProviderSet {
    ResponseCache cache;

    std::unique_ptr<EntityTagger> tagger_impl;
    std::unique_ptr<EmotionClassifier> classifier_impl;
    std::unique_ptr<DescriptionGenerator> generator_impl;
    std::unique_ptr<Embedder> scorer_impl;
    std::unique_ptr<Embedder> embedder_impl;
    std::unique_ptr<Captioner> captioner_impl;
    std::unique_ptr<ImageBackend> backend;

    std::unique_ptr<CachedTagger> tagger;
    std::unique_ptr<CachedClassifier> classifier;
    std::unique_ptr<CachedGenerator> generator;
    std::unique_ptr<CachedEmbedder> scorer;
    std::unique_ptr<CachedEmbedder> embedder;
    std::unique_ptr<CachedCaptioner> captioner;

    explicit ProviderSet(const RunConfig& cfg);

    // Live (uncached) call counts per provider role; zero after a fully
    // cached run.
    std::map<std::string, uint64_t> live_calls() const;
};

struct PoemRunStatus {
    std::string poem_id;
    bool ok = false;
    std::string error;
    int segment_count = 0;
    std::vector<std::string> artifact_files; // relative to output_dir
    double gold_boundary_agreement = -1.0;   // -1 = not applicable
};

struct RunResult {
    nlohmann::json manifest; // deterministic given config+seed+corpus
    std::vector<PoemRunStatus> poems;
    std::vector<MetricReport> reports;
    ReportTable table;
    std::map<std::string, uint64_t> live_calls;
    long wall_ms = 0;
    bool any_failed = false;
    bool all_failed = false;
};

// corpus -> segmentation -> refinement -> generation -> evaluation -> report.
// Writes manifest.json, report.json, report.txt, per-poem directories (and
// gallery.html when configured) under cfg.output_dir, plus timing.json with
// the wall clock and live-call counters.
RunResult run_pipeline(const RunConfig& cfg);
RunResult run_pipeline(const RunConfig& cfg, ProviderSet& providers);

// Per-poem stages, exposed for the narrower CLI subcommands.
struct PoemPlan {
    std::vector<Segment> segments;
    std::vector<PromptItem> prompts;
    std::vector<RefinementTrace> traces; // poemtale only
    bool consistency = false;
    double gold_boundary_agreement = -1.0;
};

PoemPlan plan_poem(const Poem& poem, const RunConfig& cfg, ProviderSet& providers);

// Gold reference emotion for a line range: modal gold-segment emotion by
// overlap when annotations exist on the poem, else the modal annotated
// emotion, else neutral.
Emotion reference_emotion(const Poem& poem, int start, int end,
                          const std::vector<LineAnnotation>* annotations);

// Portable directory name for a poem id (hash-suffixed when characters had
// to be replaced).
std::string fs_safe_id(const std::string& id);

std::string render_gallery_html(const std::vector<Poem>& poems,
                                const std::vector<PoemRunStatus>& statuses,
                                const std::map<std::string, std::vector<std::string>>& prompts);

} // namespace p2img
