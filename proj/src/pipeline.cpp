#include "p2img/pipeline.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "p2img/hash.hpp"

namespace fs = std::filesystem;

namespace p2img {

const char* to_string(Approach a) {
    switch (a) {
        case Approach::PoemTale: return "poemtale";
        case Approach::SegmentsOnly: return "segments_only";
        case Approach::SingleImage: return "single_image";
    }
    return "poemtale";
}

Approach approach_from_string(const std::string& s) {
    if (s == "poemtale") return Approach::PoemTale;
    if (s == "segments_only") return Approach::SegmentsOnly;
    if (s == "single_image") return Approach::SingleImage;
    throw ConfigError("unknown approach '" + s + "' (expected poemtale, segments_only, or single_image)");
}

// Poem ids may be arbitrary strings; directory names keep only portable
// characters, with a short hash suffix when anything was replaced.
std::string fs_safe_id(const std::string& id) {
    std::string safe;
    bool changed = false;
    for (char c : id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            safe.push_back(c);
        } else {
            safe.push_back('_');
            changed = true;
        }
    }
    if (safe.empty() || changed) safe += "-" + hex64(fnv1a64(id)).substr(0, 8);
    return safe;
}

namespace {

ProviderDescriptor descriptor_from_json(const nlohmann::json& j) {
    ProviderDescriptor d;
    if (j.is_string()) {
        d.kind = j.get<std::string>();
        return d;
    }
    d.kind = j.value("kind", "stub");
    d.endpoint = j.value("endpoint", "");
    if (j.contains("options"))
        for (const auto& [k, v] : j.at("options").items())
            d.options[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return d;
}

nlohmann::json descriptor_to_json(const ProviderDescriptor& d) {
    nlohmann::json j;
    j["kind"] = d.kind;
    if (!d.endpoint.empty()) j["endpoint"] = d.endpoint;
    if (!d.options.empty()) {
        nlohmann::json opts;
        for (const auto& [k, v] : d.options) opts[k] = v;
        j["options"] = opts;
    }
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << content;
}

std::string auth_token_for(const std::map<std::string, std::string>& options) {
    if (const char* env = std::getenv("P2IMG_API_TOKEN")) return env; // env overrides secrets
    auto it = options.find("auth_token");
    return it != options.end() ? it->second : "";
}

HttpOptions http_options_from(const ProviderDescriptor& d) {
    HttpOptions opts;
    opts.base_url = d.endpoint;
    opts.auth_token = auth_token_for(d.options);
    if (auto it = d.options.find("max_retries"); it != d.options.end())
        opts.max_retries = std::stoi(it->second);
    if (auto it = d.options.find("timeout_seconds"); it != d.options.end())
        opts.timeout_seconds = std::stoi(it->second);
    return opts;
}

} // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    if (!j.contains("corpus")) throw ConfigError("config: missing 'corpus'");
    cfg.corpus_path = j.at("corpus").get<std::string>();
    cfg.approach = approach_from_string(j.value("approach", "poemtale"));
    cfg.seed = j.value("seed", 0ULL);
    cfg.output_dir = j.value("output_dir", "out");
    cfg.cache_dir = j.value("cache_dir", "");
    cfg.workers = j.value("workers", 1);
    cfg.gallery = j.value("gallery", false);
    if (cfg.workers < 1) throw ConfigError("config: workers must be >= 1");

    if (j.contains("image")) {
        cfg.width = j.at("image").value("width", 64);
        cfg.height = j.at("image").value("height", 64);
        if (cfg.width <= 0 || cfg.height <= 0) throw ConfigError("config: bad image size");
    }

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        std::string kind = b.value("kind", "toy");
        if (kind == "toy") {
            cfg.backend.kind = BackendDescriptor::Kind::Toy;
        } else if (kind == "http") {
            cfg.backend.kind = BackendDescriptor::Kind::Http;
            cfg.backend.endpoint = b.value("endpoint", "");
            if (cfg.backend.endpoint.empty())
                throw ConfigError("config: http backend requires 'endpoint'");
        } else {
            throw ConfigError("config: unknown backend kind '" + kind + "'");
        }
        cfg.backend.model = b.value("model", kind == "toy" ? "toy" : "");
        if (b.contains("options"))
            for (const auto& [k, v] : b.at("options").items())
                cfg.backend.options[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }

    if (j.contains("providers"))
        for (const auto& [name, pd] : j.at("providers").items())
            cfg.providers[name] = descriptor_from_json(pd);

    if (j.contains("mspr")) {
        const auto& m = j.at("mspr");
        cfg.mspr.plateau_epsilon = m.value("plateau_epsilon", cfg.mspr.plateau_epsilon);
        cfg.mspr.plateau_window = m.value("plateau_window", cfg.mspr.plateau_window);
        cfg.mspr.max_iterations = m.value("max_iterations", cfg.mspr.max_iterations);
        cfg.mspr.max_retries = m.value("max_retries", cfg.mspr.max_retries);
        cfg.mspr.model = m.value("model", cfg.mspr.model);
        if (m.contains("score_reference")) {
            std::string r = m.at("score_reference").get<std::string>();
            if (r == "segment")
                cfg.mspr.score_reference = ScoreReference::SegmentText;
            else if (r == "poem")
                cfg.mspr.score_reference = ScoreReference::FullPoem;
            else
                throw ConfigError("config: score_reference must be 'segment' or 'poem'");
        }
        if (m.contains("plateau_reference")) {
            std::string r = m.at("plateau_reference").get<std::string>();
            if (r == "best_so_far")
                cfg.mspr.plateau_reference = PlateauReference::BestSoFar;
            else if (r == "previous_score")
                cfg.mspr.plateau_reference = PlateauReference::PreviousScore;
            else
                throw ConfigError("config: plateau_reference must be 'best_so_far' or 'previous_score'");
        }
        if (m.contains("templates")) {
            const auto& t = m.at("templates");
            if (t.contains("stage1_file")) cfg.mspr.templates.stage1 = read_file(t.at("stage1_file"));
            if (t.contains("refine_file")) cfg.mspr.templates.refine = read_file(t.at("refine_file"));
            if (t.contains("stage1")) cfg.mspr.templates.stage1 = t.at("stage1").get<std::string>();
            if (t.contains("refine")) cfg.mspr.templates.refine = t.at("refine").get<std::string>();
        }
        if (m.contains("score_overrides_file"))
            cfg.mspr.score_overrides = load_score_overrides(m.at("score_overrides_file"));
        cfg.mspr.validate();
    }

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        cfg.sampling.rate = s.value("rate", 0.5);
        if (cfg.sampling.rate < 0.0 || cfg.sampling.rate > 1.0)
            throw ConfigError("config: sampling rate must be in [0,1]");
        std::string pool = s.value("pool", "prior-images-only");
        if (pool == "prior-images-only")
            cfg.sampling.pool = SamplePool::PriorImagesOnly;
        else if (pool == "all-other-images")
            cfg.sampling.pool = SamplePool::AllOtherImages;
        else
            throw ConfigError("config: unknown sampling pool '" + pool + "'");
    }

    if (j.contains("policy")) cfg.policy = policy_from_json(j.at("policy"));

    if (j.contains("consistency")) {
        bool want = j.at("consistency").get<bool>();
        if (want && cfg.approach == Approach::SingleImage)
            throw ConfigError("config: single_image forbids consistency");
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["schema"] = "run-config/v1";
    j["corpus"] = corpus_path;
    j["approach"] = to_string(approach);
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["cache_dir"] = cache_dir;
    j["workers"] = workers;
    j["gallery"] = gallery;
    j["image"] = {{"width", width}, {"height", height}};
    j["backend"] = {{"kind", backend.kind == BackendDescriptor::Kind::Toy ? "toy" : "http"},
                    {"endpoint", backend.endpoint},
                    {"model", backend.model}};
    nlohmann::json provs;
    for (const auto& [name, d] : providers) provs[name] = descriptor_to_json(d);
    j["providers"] = provs;
    j["mspr"] = {{"plateau_epsilon", mspr.plateau_epsilon},
                 {"plateau_window", mspr.plateau_window},
                 {"max_iterations", mspr.max_iterations},
                 {"model", mspr.model},
                 {"score_reference",
                  mspr.score_reference == ScoreReference::SegmentText ? "segment" : "poem"},
                 {"plateau_reference", mspr.plateau_reference == PlateauReference::BestSoFar
                                           ? "best_so_far"
                                           : "previous_score"},
                 {"stage1_template_hash", hex64(mspr.templates.stage1_hash())},
                 {"refine_template_hash", hex64(mspr.templates.refine_hash())}};
    j["sampling"] = {{"rate", sampling.rate},
                     {"pool", sampling.pool == SamplePool::PriorImagesOnly ? "prior-images-only"
                                                                           : "all-other-images"}};
    j["policy"] = policy_to_json(policy);
    return j;
}

uint64_t RunConfig::config_hash() const {
    // Identifies the computation: output paths, worker count, and the gallery
    // flag do not change any produced score or artifact byte.
    nlohmann::json j = to_json();
    j.erase("output_dir");
    j.erase("cache_dir");
    j.erase("workers");
    j.erase("gallery");
    return fnv1a64(j.dump());
}

namespace {

ProviderDescriptor descriptor_or_stub(const std::map<std::string, ProviderDescriptor>& m,
                                      const std::string& name) {
    auto it = m.find(name);
    return it != m.end() ? it->second : ProviderDescriptor{};
}

std::map<std::string, EntityLabel> gazetteer_from_options(const ProviderDescriptor& d) {
    auto it = d.options.find("entries_file");
    if (it == d.options.end()) return {};
    nlohmann::json j = nlohmann::json::parse(read_file(it->second));
    std::map<std::string, EntityLabel> entries;
    for (const auto& [surface, label] : j.items()) {
        auto l = entity_label_from_string(label.get<std::string>());
        if (!l) throw ConfigError("gazetteer: unknown entity label for '" + surface + "'");
        entries[surface] = *l;
    }
    return entries;
}

std::map<Emotion, std::vector<std::string>> lexicon_from_options(const ProviderDescriptor& d) {
    auto it = d.options.find("lexicon_file");
    if (it == d.options.end()) return {};
    nlohmann::json j = nlohmann::json::parse(read_file(it->second));
    std::map<Emotion, std::vector<std::string>> lex;
    for (const auto& [name, words] : j.items()) {
        auto e = emotion_from_string(name);
        if (!e) throw ConfigError("lexicon: unknown emotion '" + name + "'");
        lex[*e] = words.get<std::vector<std::string>>();
    }
    return lex;
}

std::unique_ptr<Embedder> make_embedder(const ProviderDescriptor& d) {
    if (d.kind == "stub") {
        StubEmbedder::Mode mode = StubEmbedder::Mode::CharNgram;
        if (auto it = d.options.find("mode"); it != d.options.end() && it->second == "wordbag")
            mode = StubEmbedder::Mode::WordBag;
        uint64_t seed = StubEmbedder::kDefaultSeed;
        if (auto it = d.options.find("seed"); it != d.options.end())
            seed = std::stoull(it->second);
        return std::make_unique<StubEmbedder>(seed, mode);
    }
    if (d.kind == "http") {
        bool joint = true;
        if (auto it = d.options.find("joint_space"); it != d.options.end())
            joint = it->second != "false";
        return std::make_unique<HttpEmbedderClient>(http_options_from(d), joint);
    }
    throw ConfigError("unknown embedder kind '" + d.kind + "'");
}

} // namespace

ProviderSet::ProviderSet(const RunConfig& cfg) : cache(cfg.cache_dir) {
    ProviderDescriptor td = descriptor_or_stub(cfg.providers, "tagger");
    ProviderDescriptor cd = descriptor_or_stub(cfg.providers, "classifier");
    ProviderDescriptor gd = descriptor_or_stub(cfg.providers, "generator");
    ProviderDescriptor sd = descriptor_or_stub(cfg.providers, "scorer");
    ProviderDescriptor ed = descriptor_or_stub(cfg.providers, "embedder");
    ProviderDescriptor capd = descriptor_or_stub(cfg.providers, "captioner");

    // Tagger / classifier. An HTTP pair on the same endpoint shares one
    // /annotate client so both views of a line batch cost one live call.
    std::shared_ptr<HttpAnnotateClient> shared_annotate;
    if (td.kind == "http") {
        shared_annotate = std::make_shared<HttpAnnotateClient>(http_options_from(td));
        struct TaggerView : EntityTagger {
            std::shared_ptr<HttpAnnotateClient> c;
            explicit TaggerView(std::shared_ptr<HttpAnnotateClient> c) : c(std::move(c)) {}
            std::vector<std::vector<EntitySpan>> tag(const std::vector<std::string>& l) override {
                return c->tag(l);
            }
            std::string descriptor_id() const override { return c->descriptor_id(); }
        };
        tagger_impl = std::make_unique<TaggerView>(shared_annotate);
    } else if (td.kind == "stub") {
        auto entries = gazetteer_from_options(td);
        if (entries.empty()) entries = GazetteerTagger::default_entries();
        tagger_impl = std::make_unique<GazetteerTagger>(std::move(entries));
    } else {
        throw ConfigError("unknown tagger kind '" + td.kind + "'");
    }

    if (cd.kind == "http") {
        struct ClassifierView : EmotionClassifier {
            std::shared_ptr<HttpAnnotateClient> c;
            explicit ClassifierView(std::shared_ptr<HttpAnnotateClient> c) : c(std::move(c)) {}
            std::vector<EmotionPrediction> classify(const std::vector<std::string>& l) override {
                return c->classify(l);
            }
            std::string descriptor_id() const override { return c->descriptor_id(); }
        };
        auto client = shared_annotate && shared_annotate->descriptor_id() ==
                                             "http-annotate/" + cd.endpoint
                          ? shared_annotate
                          : std::make_shared<HttpAnnotateClient>(http_options_from(cd));
        classifier_impl = std::make_unique<ClassifierView>(client);
    } else if (cd.kind == "stub") {
        auto lex = lexicon_from_options(cd);
        if (lex.empty()) lex = LexiconClassifier::default_lexicon();
        classifier_impl = std::make_unique<LexiconClassifier>(std::move(lex));
    } else {
        throw ConfigError("unknown classifier kind '" + cd.kind + "'");
    }

    if (gd.kind == "stub") {
        generator_impl = std::make_unique<StubGenerator>();
    } else if (gd.kind == "http") {
        generator_impl = std::make_unique<HttpChatGenerator>(http_options_from(gd));
    } else if (gd.kind == "cassette") {
        auto it = gd.options.find("path");
        if (it == gd.options.end()) throw ConfigError("cassette generator requires options.path");
        generator_impl = std::make_unique<CassetteGenerator>(Cassette::load(it->second));
    } else {
        throw ConfigError("unknown generator kind '" + gd.kind + "'");
    }

    scorer_impl = make_embedder(sd);
    embedder_impl = make_embedder(ed);

    if (capd.kind == "stub") {
        captioner_impl = std::make_unique<StubCaptioner>();
    } else if (capd.kind == "http") {
        captioner_impl = std::make_unique<HttpCaptionerClient>(http_options_from(capd));
    } else {
        throw ConfigError("unknown captioner kind '" + capd.kind + "'");
    }

    if (cfg.backend.kind == BackendDescriptor::Kind::Toy) {
        backend = std::make_unique<ToyBackend>(cfg.sampling);
    } else {
        HttpOptions opts;
        opts.base_url = cfg.backend.endpoint;
        opts.auth_token = auth_token_for(cfg.backend.options);
        backend = std::make_unique<HttpImageBackend>(opts, cfg.backend.model);
    }

    std::string template_context =
        hex64(cfg.mspr.templates.stage1_hash()) + ":" + hex64(cfg.mspr.templates.refine_hash());
    tagger = std::make_unique<CachedTagger>(*tagger_impl, cache);
    classifier = std::make_unique<CachedClassifier>(*classifier_impl, cache);
    generator = std::make_unique<CachedGenerator>(*generator_impl, cache, template_context);
    scorer = std::make_unique<CachedEmbedder>(*scorer_impl, cache);
    embedder = std::make_unique<CachedEmbedder>(*embedder_impl, cache);
    captioner = std::make_unique<CachedCaptioner>(*captioner_impl, cache);
}

std::map<std::string, uint64_t> ProviderSet::live_calls() const {
    std::map<std::string, uint64_t> counts;
    auto probe = [&](const std::string& name, const auto* impl) {
        uint64_t n = 0;
        if (auto* g = dynamic_cast<const GazetteerTagger*>(impl))
            n = g->live_calls();
        else if (auto* l = dynamic_cast<const LexiconClassifier*>(impl))
            n = l->live_calls();
        else if (auto* s = dynamic_cast<const StubGenerator*>(impl))
            n = s->live_calls();
        else if (auto* e = dynamic_cast<const StubEmbedder*>(impl))
            n = e->live_calls();
        else if (auto* c = dynamic_cast<const StubCaptioner*>(impl))
            n = c->live_calls();
        else if (auto* h = dynamic_cast<const HttpChatGenerator*>(impl))
            n = h->live_calls();
        else if (auto* he = dynamic_cast<const HttpEmbedderClient*>(impl))
            n = he->live_calls();
        else if (auto* hc = dynamic_cast<const HttpCaptionerClient*>(impl))
            n = hc->live_calls();
        counts[name] = n;
    };
    probe("tagger", tagger_impl.get());
    probe("classifier", classifier_impl.get());
    probe("generator", generator_impl.get());
    probe("scorer", scorer_impl.get());
    probe("embedder", embedder_impl.get());
    probe("captioner", captioner_impl.get());
    return counts;
}

Emotion reference_emotion(const Poem& poem, int start, int end,
                          const std::vector<LineAnnotation>* annotations) {
    if (!poem.gold_segments.empty()) {
        std::map<Emotion, int> overlap;
        for (const auto& g : poem.gold_segments) {
            int lines = std::min(end, g.end) - std::max(start, g.start);
            if (lines > 0) overlap[g.emotion] += lines;
        }
        if (!overlap.empty()) {
            int best = 0;
            for (const auto& [e, n] : overlap) best = std::max(best, n);
            // Earliest overlapping gold segment among the tied labels wins.
            for (const auto& g : poem.gold_segments) {
                int lines = std::min(end, g.end) - std::max(start, g.start);
                if (lines > 0 && overlap[g.emotion] == best) return g.emotion;
            }
        }
    }
    if (annotations) {
        std::map<Emotion, int> counts;
        for (int i = start; i < end && i < static_cast<int>(annotations->size()); ++i)
            counts[(*annotations)[static_cast<size_t>(i)].emotion] += 1;
        if (!counts.empty()) {
            int best = 0;
            for (const auto& [e, n] : counts) best = std::max(best, n);
            for (int i = start; i < end && i < static_cast<int>(annotations->size()); ++i) {
                Emotion e = (*annotations)[static_cast<size_t>(i)].emotion;
                if (counts[e] == best) return e;
            }
        }
    }
    return Emotion::Neutral;
}

PoemPlan plan_poem(const Poem& poem, const RunConfig& cfg, ProviderSet& providers) {
    PoemPlan plan;
    switch (cfg.approach) {
        case Approach::SingleImage: {
            plan.consistency = false;
            plan.prompts.push_back({poem.id + "/s0", poem.body_text()});
            break;
        }
        case Approach::SegmentsOnly: {
            plan.consistency = false;
            if (!poem.gold_segments.empty()) {
                for (size_t k = 0; k < poem.gold_segments.size(); ++k) {
                    Segment seg;
                    seg.poem_id = poem.id;
                    seg.index = static_cast<int>(k);
                    seg.start = poem.gold_segments[k].start;
                    seg.end = poem.gold_segments[k].end;
                    seg.dominant_emotion = poem.gold_segments[k].emotion;
                    plan.segments.push_back(seg);
                }
            } else {
                auto annotations =
                    annotate_lines(poem, *providers.tagger, *providers.classifier, cfg.policy);
                plan.segments = segment_poem(poem, annotations, cfg.policy);
                plan.gold_boundary_agreement = -1.0;
            }
            for (const auto& seg : plan.segments)
                plan.prompts.push_back({seg.id(), seg.text(poem)});
            break;
        }
        case Approach::PoemTale: {
            plan.consistency = true;
            auto annotations =
                annotate_lines(poem, *providers.tagger, *providers.classifier, cfg.policy);
            plan.segments = segment_poem(poem, annotations, cfg.policy);
            if (!poem.gold_segments.empty())
                plan.gold_boundary_agreement = gold_boundary_agreement(plan.segments, poem);
            for (const auto& seg : plan.segments) {
                RefinementTrace trace =
                    run_mspr(seg, poem, *providers.generator, *providers.scorer, cfg.mspr);
                if (trace.best < 0)
                    throw ProviderError("mspr produced no drafts for " + seg.id() +
                                            (trace.error.empty() ? "" : ": " + trace.error),
                                        false);
                plan.prompts.push_back(
                    {seg.id(), trace.drafts[static_cast<size_t>(trace.best)].text});
                plan.traces.push_back(std::move(trace));
            }
            break;
        }
    }
    return plan;
}

namespace {

struct PoemOutputs {
    PoemRunStatus status;
    std::optional<MetricReport> report;
    std::vector<std::pair<std::string, std::string>> files; // (relative path, content)
    std::vector<std::string> prompt_texts;
};

PoemOutputs process_poem(const Poem& poem, const RunConfig& cfg, ProviderSet& providers) {
    PoemOutputs out;
    out.status.poem_id = poem.id;

    PoemPlan plan = plan_poem(poem, cfg, providers);
    out.status.segment_count = static_cast<int>(plan.segments.size());
    out.status.gold_boundary_agreement = plan.gold_boundary_agreement;

    GenerationRequest req;
    req.poem_id = poem.id;
    req.prompts = plan.prompts;
    req.consistency = plan.consistency;
    req.seed = cfg.seed;
    req.width = cfg.width;
    req.height = cfg.height;
    std::vector<GenerationOutcome> outcomes = generate_sequence(req, *providers.backend);

    std::string poem_dir = "poems/" + fs_safe_id(poem.id);
    std::vector<std::string> files;
    std::vector<ImageArtifact> images;
    std::vector<size_t> image_slots;
    for (size_t k = 0; k < outcomes.size(); ++k) {
        if (!outcomes[k].ok()) {
            files.push_back("");
            continue;
        }
        std::string rel = poem_dir + "/seg_" + std::to_string(k) + ".png";
        auto png = outcomes[k].artifact->png();
        out.files.emplace_back(rel, std::string(png.begin(), png.end()));
        files.push_back(rel);
        out.status.artifact_files.push_back(rel);
        images.push_back(*outcomes[k].artifact);
        image_slots.push_back(k);
    }
    out.files.emplace_back(poem_dir + "/sequence.json",
                           sequence_manifest(poem.id, outcomes, files).dump(2) + "\n");
    for (size_t k = 0; k < plan.traces.size(); ++k)
        out.files.emplace_back(poem_dir + "/trace_" + std::to_string(k) + ".json",
                               trace_to_json(plan.traces[k]).dump(2) + "\n");
    for (const auto& p : plan.prompts) out.prompt_texts.push_back(p.text);

    if (images.empty()) {
        std::string first_error;
        for (const auto& o : outcomes)
            if (!o.ok()) {
                first_error = o.error;
                break;
            }
        throw ProviderError("no artifacts generated: " + first_error, false);
    }

    MetricReport report;
    report.poem_id = poem.id;
    report.approach = to_string(cfg.approach);
    report.model = providers.backend->name();
    std::string poem_text = poem.body_text();
    double blip = 0.0, longclip = 0.0, emotion = 0.0;
    for (size_t idx = 0; idx < images.size(); ++idx) {
        const ImageArtifact& img = images[idx];
        size_t slot = image_slots[idx];
        blip += blip_alignment(img, plan.prompts[slot].text, *providers.captioner,
                               *providers.embedder);
        longclip += longclip_alignment(poem_text, img, *providers.embedder);
        Emotion gold = Emotion::Neutral;
        int start = 0, end = static_cast<int>(poem.lines.size());
        if (slot < plan.segments.size()) {
            start = plan.segments[slot].start;
            end = plan.segments[slot].end;
            gold = plan.segments[slot].dominant_emotion;
        }
        if (!poem.gold_segments.empty()) gold = reference_emotion(poem, start, end, nullptr);
        emotion += emotion_alignment(img, gold, *providers.embedder);
    }
    report.blip_score = blip / static_cast<double>(images.size());
    report.longclip_score = longclip / static_cast<double>(images.size());
    report.emotion_score = emotion / static_cast<double>(images.size());
    report.consistency_score = character_consistency(images, *providers.embedder);

    bool all_ok = images.size() == outcomes.size();
    out.status.ok = all_ok;
    if (!all_ok) {
        for (const auto& o : outcomes)
            if (!o.ok()) {
                out.status.error = "segment " + o.segment_id + ": " + o.error;
                break;
            }
    }
    out.report = std::move(report);
    return out;
}

} // namespace

RunResult run_pipeline(const RunConfig& cfg) {
    ProviderSet providers(cfg);
    return run_pipeline(cfg, providers);
}

RunResult run_pipeline(const RunConfig& cfg, ProviderSet& providers) {
    auto t0 = std::chrono::steady_clock::now();
    RunResult result;

    std::ifstream corpus_in(cfg.corpus_path);
    if (!corpus_in) throw ConfigError("cannot open corpus: " + cfg.corpus_path);
    ParseResult parsed = parse_corpus(corpus_in);
    if (parsed.poems.empty()) throw ConfigError("corpus has no valid poems: " + cfg.corpus_path);

    std::vector<PoemOutputs> outputs(parsed.poems.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= parsed.poems.size()) return;
            const Poem& poem = parsed.poems[i];
            try {
                outputs[i] = process_poem(poem, cfg, providers);
            } catch (const std::exception& e) {
                // Poisoned poems never abort the run.
                outputs[i] = PoemOutputs{};
                outputs[i].status.poem_id = poem.id;
                outputs[i].status.ok = false;
                outputs[i].status.error = e.what();
            }
        }
    };
    int n_workers = std::min<int>(cfg.workers, static_cast<int>(parsed.poems.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    std::map<std::string, std::vector<std::string>> prompts_by_poem;
    for (auto& po : outputs) {
        for (const auto& [rel, content] : po.files) write_file(out_dir / rel, content);
        result.poems.push_back(po.status);
        if (po.report) result.reports.push_back(*po.report);
        if (!po.status.ok) result.any_failed = true;
        prompts_by_poem[po.status.poem_id] = po.prompt_texts;
    }
    result.all_failed = result.reports.empty();

    nlohmann::json manifest;
    manifest["schema"] = "run-manifest/v1";
    manifest["config_hash"] = hex64(cfg.config_hash());
    manifest["approach"] = to_string(cfg.approach);
    manifest["seed"] = cfg.seed;
    manifest["template_hashes"] = {{"stage1", hex64(cfg.mspr.templates.stage1_hash())},
                                   {"refine", hex64(cfg.mspr.templates.refine_hash())}};
    manifest["emotion_prompt_version"] = kEmotionPromptVersion;
    nlohmann::json poem_entries = nlohmann::json::array();
    for (const auto& st : result.poems) {
        nlohmann::json e;
        e["id"] = st.poem_id;
        e["status"] = st.ok ? "ok" : "failed";
        if (!st.error.empty()) e["error"] = st.error;
        e["segment_count"] = st.segment_count;
        e["artifacts"] = st.artifact_files;
        if (st.gold_boundary_agreement >= 0.0)
            e["gold_boundary_agreement"] = st.gold_boundary_agreement;
        poem_entries.push_back(e);
    }
    manifest["poems"] = poem_entries;

    if (!result.reports.empty()) {
        result.table = aggregate_report(result.reports);
        nlohmann::json report_json = report_to_json(result.table);
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : result.reports) rows.push_back(metric_to_json(r));
        report_json["runs"] = rows;
        write_file(out_dir / "report.json", report_json.dump(2) + "\n");
        write_file(out_dir / "report.txt", render_report_text(result.table));
        manifest["report"] = {{"json", "report.json"}, {"text", "report.txt"}};
    }

    if (cfg.gallery) {
        write_file(out_dir / "gallery.html",
                   render_gallery_html(parsed.poems, result.poems, prompts_by_poem));
        manifest["gallery"] = "gallery.html";
    }

    result.manifest = manifest;
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

    result.live_calls = providers.live_calls();
    auto t1 = std::chrono::steady_clock::now();
    result.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

    // Wall clock and live-call counters are run-dependent, so they live
    // outside the deterministic manifest.
    nlohmann::json timing;
    timing["schema"] = "timing/v1";
    timing["wall_ms"] = result.wall_ms;
    nlohmann::json calls;
    for (const auto& [name, n] : result.live_calls) calls[name] = n;
    timing["live_calls"] = calls;
    write_file(out_dir / "timing.json", timing.dump(2) + "\n");

    return result;
}

namespace {
std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}
} // namespace

std::string render_gallery_html(const std::vector<Poem>& poems,
                                const std::vector<PoemRunStatus>& statuses,
                                const std::map<std::string, std::vector<std::string>>& prompts) {
    std::string html =
        "<!doctype html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        "<title>generated sequences</title>\n"
        "<style>body{font-family:sans-serif;margin:2em}figure{display:inline-block;"
        "margin:0 1em 1em 0;max-width:20em;vertical-align:top}img{image-rendering:pixelated;"
        "width:128px;height:128px}figcaption{font-size:0.8em;color:#444}</style>\n"
        "</head>\n<body>\n";
    for (size_t i = 0; i < statuses.size(); ++i) {
        const auto& st = statuses[i];
        const Poem* poem = nullptr;
        for (const auto& p : poems)
            if (p.id == st.poem_id) poem = &p;
        html += "<h2>" + html_escape(poem ? poem->title : st.poem_id) + "</h2>\n";
        if (!st.ok && st.artifact_files.empty()) {
            html += "<p>failed: " + html_escape(st.error) + "</p>\n";
            continue;
        }
        auto it = prompts.find(st.poem_id);
        for (size_t k = 0; k < st.artifact_files.size(); ++k) {
            std::string prompt =
                it != prompts.end() && k < it->second.size() ? it->second[k] : "";
            html += "<figure><img src=\"" + st.artifact_files[k] + "\" alt=\"\">\n";
            html += "<figcaption>" + html_escape(prompt) + "</figcaption></figure>\n";
        }
    }
    html += "</body>\n</html>\n";
    return html;
}

} // namespace p2img
