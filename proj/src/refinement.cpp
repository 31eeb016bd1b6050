#include "p2img/refinement.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "p2img/hash.hpp"

namespace p2img {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::Plateau: return "plateau";
        case Termination::MaxIterations: return "max_iterations";
        case Termination::GeneratorFailure: return "generator_failure";
    }
    return "max_iterations";
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.stage1 =
        "You are a visual storytelling expert. Read the poem and the segment below, "
        "then describe one vivid and imaginative scene that captures the segment's "
        "meaning, mood, and imagery for an image generator.\n"
        "\n"
        "Poem:\n"
        "{poem}\n"
        "\n"
        "Segment:\n"
        "{segment}\n"
        "\n"
        "Scene description:";
    t.refine =
        "You are a visual storytelling expert refining an image description. Deepen "
        "the emotional and poetic resonance of the scene: draw out symbolic detail, "
        "concrete imagery, and atmosphere, while staying faithful to the poem.\n"
        "\n"
        "Poem:\n"
        "{poem}\n"
        "\n"
        "Previous description:\n"
        "{previous_description}\n"
        "\n"
        "Improved scene description:";
    return t;
}

uint64_t PromptTemplates::stage1_hash() const { return fnv1a64(stage1); }
uint64_t PromptTemplates::refine_hash() const { return fnv1a64(refine); }

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    for (size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            size_t close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                std::string name(tmpl.substr(i + 1, close - i - 1));
                auto it = values.find(name);
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

ScoreOverrides load_score_overrides(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("score overrides: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ScoreOverrides out;
    for (const auto& item : j.at("overrides"))
        out[{item.at("segment_id").get<std::string>(), item.at("stage").get<int>()}] =
            item.at("score").get<double>();
    return out;
}

void MsprConfig::validate() const {
    if (plateau_epsilon < 0.0) throw ConfigError("mspr: plateau_epsilon must be >= 0");
    if (plateau_window < 1) throw ConfigError("mspr: plateau_window must be >= 1");
    if (max_iterations < plateau_window + 1)
        throw ConfigError("mspr: max_iterations must be >= plateau_window + 1");
    if (max_retries < 0) throw ConfigError("mspr: max_retries must be >= 0");
}

PlateauDetector::PlateauDetector(double epsilon, int window, PlateauReference reference)
    : epsilon_(epsilon), window_(window), reference_(reference) {}

bool PlateauDetector::feed(double score) {
    double ref = score;
    if (reference_ == PlateauReference::BestSoFar && !series_.empty())
        ref = std::max(series_.back(), score);
    series_.push_back(ref);

    int n = static_cast<int>(series_.size());
    if (n < window_ + 1) return false;
    double improvement = series_[static_cast<size_t>(n - 1)] -
                         series_[static_cast<size_t>(n - window_)];
    return improvement < epsilon_;
}

namespace {

GenRequest make_request(const MsprConfig& cfg, const std::string& prompt) {
    GenRequest req;
    req.model = cfg.model;
    req.messages = {{"user", prompt}};
    req.temperature = 0.0;
    return req;
}

std::string generate_with_retries(DescriptionGenerator& generator, const GenRequest& req,
                                  int max_retries) {
    return with_retries(max_retries, [&] { return generator.generate(req); });
}

} // namespace

PromptDraft initial_description(const std::string& segment_text, const std::string& poem_context,
                                DescriptionGenerator& generator, const MsprConfig& cfg,
                                const std::string& segment_id) {
    if (segment_text.empty())
        throw std::invalid_argument("initial_description: empty segment text");
    std::string prompt = render_template(cfg.templates.stage1,
                                         {{"poem", poem_context}, {"segment", segment_text}});
    std::string text = generate_with_retries(generator, make_request(cfg, prompt), cfg.max_retries);
    if (text.empty()) throw ProviderError("initial_description: generator returned empty text", false);

    PromptDraft draft;
    draft.segment_id = segment_id;
    draft.stage = 1;
    draft.text = text;
    return draft;
}

PromptDraft refine_description(const std::string& poem_text, const PromptDraft& previous,
                               DescriptionGenerator& generator, const MsprConfig& cfg) {
    if (previous.text.empty()) throw std::invalid_argument("refine_description: empty previous draft");
    std::string prompt = render_template(
        cfg.templates.refine, {{"poem", poem_text}, {"previous_description", previous.text}});
    std::string text = generate_with_retries(generator, make_request(cfg, prompt), cfg.max_retries);
    if (text.empty()) throw ProviderError("refine_description: generator returned empty text", false);

    PromptDraft draft;
    draft.segment_id = previous.segment_id;
    draft.stage = previous.stage + 1;
    draft.text = text;
    return draft;
}

double score_alignment(const std::string& reference_text, const std::string& description,
                       TextEmbedder& scorer) {
    if (reference_text.empty() || description.empty())
        throw std::invalid_argument("score_alignment: empty text");
    return cosine_similarity(scorer.embed_text(reference_text), scorer.embed_text(description));
}

RefinementTrace run_mspr(const std::string& segment_id, const std::string& segment_text,
                         const std::string& poem_text, DescriptionGenerator& generator,
                         TextEmbedder& scorer, const MsprConfig& cfg) {
    cfg.validate();
    RefinementTrace trace;
    trace.segment_id = segment_id;

    const std::string& reference =
        cfg.score_reference == ScoreReference::SegmentText ? segment_text : poem_text;
    PlateauDetector detector(cfg.plateau_epsilon, cfg.plateau_window, cfg.plateau_reference);

    auto score_draft = [&](PromptDraft& draft) {
        auto it = cfg.score_overrides.find({segment_id, draft.stage});
        draft.score = it != cfg.score_overrides.end()
                          ? it->second
                          : score_alignment(reference, draft.text, scorer);
    };

    trace.termination = Termination::MaxIterations;
    for (int stage = 1; stage <= cfg.max_iterations; ++stage) {
        PromptDraft draft;
        try {
            draft = stage == 1
                        ? initial_description(segment_text, poem_text, generator, cfg, segment_id)
                        : refine_description(poem_text, trace.drafts.back(), generator, cfg);
        } catch (const ProviderError& e) {
            trace.termination = Termination::GeneratorFailure;
            trace.error = e.what();
            break;
        }
        score_draft(draft);
        trace.drafts.push_back(std::move(draft));
        if (detector.feed(trace.drafts.back().score)) {
            trace.termination = Termination::Plateau;
            break;
        }
    }

    if (!trace.drafts.empty()) {
        trace.best = 0;
        for (size_t i = 1; i < trace.drafts.size(); ++i)
            if (trace.drafts[i].score > trace.drafts[static_cast<size_t>(trace.best)].score)
                trace.best = static_cast<int>(i);
    }
    return trace;
}

RefinementTrace run_mspr(const Segment& segment, const Poem& poem,
                         DescriptionGenerator& generator, TextEmbedder& scorer,
                         const MsprConfig& cfg) {
    return run_mspr(segment.id(), segment.text(poem), poem.body_text(), generator, scorer, cfg);
}

nlohmann::json trace_to_json(const RefinementTrace& t) {
    nlohmann::json j;
    j["schema"] = "refinement-trace/v1";
    j["segment_id"] = t.segment_id;
    j["termination"] = to_string(t.termination);
    if (t.best >= 0)
        j["best"] = t.best;
    else
        j["best"] = nullptr;
    if (!t.error.empty()) j["error"] = t.error;
    nlohmann::json drafts = nlohmann::json::array();
    for (const auto& d : t.drafts)
        drafts.push_back({{"stage", d.stage}, {"text", d.text}, {"score", d.score}});
    j["drafts"] = drafts;
    return j;
}

Cassette Cassette::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cassette: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_array()) throw ConfigError("cassette: expected a JSON array");
    Cassette c;
    for (const auto& item : j)
        c.entries_.emplace_back(item.at("request_hash").get<std::string>(),
                                item.at("response_text").get<std::string>());
    return c;
}

void Cassette::save(const std::string& path) const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [hash, text] : entries_)
        j.push_back({{"request_hash", hash}, {"response_text", text}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cassette: cannot write " + path);
    out << j.dump(2) << "\n";
}

std::optional<std::string> Cassette::lookup(uint64_t request_hash) const {
    std::string key = hex64(request_hash);
    for (const auto& [hash, text] : entries_)
        if (hash == key) return text;
    return std::nullopt;
}

void Cassette::record(uint64_t request_hash, const std::string& response_text) {
    entries_.emplace_back(hex64(request_hash), response_text);
}

CassetteGenerator::CassetteGenerator(Cassette cassette) : cassette_(std::move(cassette)) {}

CassetteGenerator::CassetteGenerator(Cassette cassette, DescriptionGenerator& inner,
                                     std::string record_path)
    : cassette_(std::move(cassette)), inner_(&inner), record_path_(std::move(record_path)) {}

std::string CassetteGenerator::generate(const GenRequest& req) {
    uint64_t h = req.request_hash();
    if (auto hit = cassette_.lookup(h)) return *hit;
    if (!inner_)
        throw ProviderError("cassette: no recorded response for request " + hex64(h), false);
    std::string response = inner_->generate(req);
    cassette_.record(h, response);
    if (!record_path_.empty()) cassette_.save(record_path_);
    return response;
}

std::string CassetteGenerator::descriptor_id() const {
    return inner_ ? "cassette-record/" + inner_->descriptor_id() : "cassette-replay/v1";
}

} // namespace p2img
