#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "p2img/providers.hpp"
#include "p2img/segmentation.hpp"

namespace p2img {

struct PromptDraft {
    std::string segment_id;
    int stage = 1; // contiguous from 1 within a trace
    std::string text;
    double score = 0.0;
};

enum class Termination { Plateau, MaxIterations, GeneratorFailure };
const char* to_string(Termination t);

struct RefinementTrace {
    std::string segment_id;
    std::vector<PromptDraft> drafts;
    int best = -1; // argmax score, earliest on ties; -1 when drafts is empty
    Termination termination = Termination::MaxIterations;
    std::string error;
};

// Which series drives saturation: the running best (default) or the raw
// per-stage score.
enum class PlateauReference { BestSoFar, PreviousScore };

// What the candidate description is scored against.
enum class ScoreReference { SegmentText, FullPoem };

struct PromptTemplates {
    std::string stage1;
    std::string refine;

    static PromptTemplates defaults();
    uint64_t stage1_hash() const;
    uint64_t refine_hash() const;
};

// {name} placeholders; unknown placeholders are left intact.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values);

using ScoreOverrides = std::map<std::pair<std::string, int>, double>;
ScoreOverrides load_score_overrides(const std::string& path);

struct MsprConfig {
    double plateau_epsilon = 0.005;
    int plateau_window = 3;
    int max_iterations = 8;
    PromptTemplates templates = PromptTemplates::defaults();
    PlateauReference plateau_reference = PlateauReference::BestSoFar;
    ScoreReference score_reference = ScoreReference::SegmentText;
    int max_retries = 2;
    std::string model = "default";
    ScoreOverrides score_overrides; // expert scores keyed by (segment_id, stage)

    void validate() const; // max_iterations >= plateau_window + 1, epsilon >= 0
};

// Saturation rule over the score sequence alone: after stage i (1-based,
// i >= window+1) the reference series must have improved by less than epsilon
// across the last `window` stages, i.e. ref[i] - ref[i-window+1] < epsilon.
class PlateauDetector {
public:
    PlateauDetector(double epsilon, int window, PlateauReference reference);
    bool feed(double score); // true once the plateau condition holds

private:
    double epsilon_;
    int window_;
    PlateauReference reference_;
    std::vector<double> series_;
};

PromptDraft initial_description(const std::string& segment_text, const std::string& poem_context,
                                DescriptionGenerator& generator, const MsprConfig& cfg,
                                const std::string& segment_id = "");

PromptDraft refine_description(const std::string& poem_text, const PromptDraft& previous,
                               DescriptionGenerator& generator, const MsprConfig& cfg);

// Cosine similarity of the scorer's embeddings; symmetric in its arguments.
double score_alignment(const std::string& reference_text, const std::string& description,
                       TextEmbedder& scorer);

RefinementTrace run_mspr(const Segment& segment, const Poem& poem,
                         DescriptionGenerator& generator, TextEmbedder& scorer,
                         const MsprConfig& cfg);

// Text-level core used by the Segment overload and by tests.
RefinementTrace run_mspr(const std::string& segment_id, const std::string& segment_text,
                         const std::string& poem_text, DescriptionGenerator& generator,
                         TextEmbedder& scorer, const MsprConfig& cfg);

nlohmann::json trace_to_json(const RefinementTrace& t); // schema refinement-trace/v1

// Record/replay store for generator responses: a JSON array of
// {request_hash, response_text}, request_hash being the hex of the canonical
// request payload hash.
class Cassette {
public:
    static Cassette load(const std::string& path);
    void save(const std::string& path) const;

    std::optional<std::string> lookup(uint64_t request_hash) const;
    void record(uint64_t request_hash, const std::string& response_text);
    size_t size() const { return entries_.size(); }

private:
    std::vector<std::pair<std::string, std::string>> entries_; // (hex hash, text)
};

// Replay-only generator: a request whose hash is absent from the cassette is
// a non-retryable failure. With an inner generator it records pass-through
// responses instead.
class CassetteGenerator : public DescriptionGenerator {
public:
    explicit CassetteGenerator(Cassette cassette); // replay
    CassetteGenerator(Cassette cassette, DescriptionGenerator& inner, std::string record_path);

    std::string generate(const GenRequest& req) override;
    std::string descriptor_id() const override;
    const Cassette& cassette() const { return cassette_; }

private:
    Cassette cassette_;
    DescriptionGenerator* inner_ = nullptr;
    std::string record_path_;
};

} // namespace p2img
