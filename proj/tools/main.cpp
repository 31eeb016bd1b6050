// poem2img: poem corpus tooling and the poem -> image-sequence pipeline.
//
// Exit codes: 0 success, 1 partial failures, 2 configuration/usage errors.

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

#include "p2img/npy.hpp"
#include "p2img/pipeline.hpp"

using namespace p2img;

namespace {

ParseResult load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus: " + path);
    return parse_corpus(in);
}

const Poem* find_poem(const ParseResult& corpus, const std::string& id) {
    for (const auto& p : corpus.poems)
        if (p.id == id) return &p;
    return nullptr;
}

int cmd_stats(const std::string& corpus_path) {
    ParseResult corpus = load_corpus(corpus_path);
    if (corpus.poems.empty()) throw ConfigError("corpus has no valid poems");
    nlohmann::json j = stats_to_json(corpus_stats(corpus.poems));
    if (!corpus.errors.empty()) {
        nlohmann::json errs = nlohmann::json::array();
        for (const auto& e : corpus.errors)
            errs.push_back({{"code", e.code}, {"message", e.message}, {"line", e.line_no}});
        j["parse_errors"] = errs;
    }
    std::cout << j.dump(2) << "\n";
    return corpus.errors.empty() ? 0 : 1;
}

int cmd_validate(const std::string& corpus_path) {
    ParseResult corpus = load_corpus(corpus_path);
    nlohmann::json out = nlohmann::json::array();
    bool any_failed = !corpus.errors.empty();
    for (const auto& e : corpus.errors) {
        out.push_back({{"schema", "validation-report/v1"},
                       {"poem_id", e.poem_id},
                       {"passed", false},
                       {"issues", nlohmann::json::array({nlohmann::json{{"code", e.code},
                                                                        {"message", e.message},
                                                                        {"location", "line " + std::to_string(e.line_no)},
                                                                        {"severity", "error"}}})}});
    }
    for (const auto& p : corpus.poems) {
        ValidationReport r = validate_poem(p);
        if (!r.passed) any_failed = true;
        out.push_back(validation_to_json(r));
    }
    std::cout << out.dump(2) << "\n";
    return any_failed ? 1 : 0;
}

RunConfig config_for(const std::string& config_path, const std::string& corpus_override) {
    RunConfig cfg;
    if (!config_path.empty()) {
        cfg = RunConfig::from_file(config_path);
    } else if (!corpus_override.empty()) {
        cfg.corpus_path = corpus_override;
    } else {
        throw ConfigError("either --config or --corpus is required");
    }
    if (!corpus_override.empty()) cfg.corpus_path = corpus_override;
    return cfg;
}

int cmd_segment(const std::string& config_path, const std::string& corpus_path,
                const std::string& poem_id, const std::string& policy_path) {
    RunConfig cfg = config_for(config_path, corpus_path);
    if (!policy_path.empty()) {
        std::ifstream in(policy_path);
        if (!in) throw ConfigError("cannot open policy file: " + policy_path);
        cfg.policy = policy_from_json(nlohmann::json::parse(in));
    }
    ParseResult corpus = load_corpus(cfg.corpus_path);
    const Poem* poem = find_poem(corpus, poem_id);
    if (!poem) throw ConfigError("poem '" + poem_id + "' not found in corpus");

    ProviderSet providers(cfg);
    auto annotations = annotate_lines(*poem, *providers.tagger, *providers.classifier, cfg.policy);
    auto segments = segment_poem(*poem, annotations, cfg.policy);
    std::cout << segments_to_json(segments, *poem).dump(2) << "\n";
    return 0;
}

int cmd_refine(const std::string& config_path, const std::string& poem_id, int segment_index) {
    RunConfig cfg = RunConfig::from_file(config_path);
    ParseResult corpus = load_corpus(cfg.corpus_path);
    const Poem* poem = find_poem(corpus, poem_id);
    if (!poem) throw ConfigError("poem '" + poem_id + "' not found in corpus");

    ProviderSet providers(cfg);
    auto annotations = annotate_lines(*poem, *providers.tagger, *providers.classifier, cfg.policy);
    auto segments = segment_poem(*poem, annotations, cfg.policy);

    nlohmann::json out = nlohmann::json::array();
    for (const auto& seg : segments) {
        if (segment_index >= 0 && seg.index != segment_index) continue;
        out.push_back(trace_to_json(run_mspr(seg, *poem, *providers.generator,
                                             *providers.scorer, cfg.mspr)));
    }
    if (out.empty()) throw ConfigError("no segment with index " + std::to_string(segment_index));
    std::cout << (segment_index >= 0 ? out.at(0).dump(2) : out.dump(2)) << "\n";
    return 0;
}

int cmd_generate(const std::string& config_path, const std::string& poem_id, bool dump_features) {
    RunConfig cfg = RunConfig::from_file(config_path);
    ParseResult corpus = load_corpus(cfg.corpus_path);
    ProviderSet providers(cfg);

    int failures = 0;
    for (const auto& poem : corpus.poems) {
        if (!poem_id.empty() && poem.id != poem_id) continue;
        try {
            PoemPlan plan = plan_poem(poem, cfg, providers);
            GenerationRequest req;
            req.poem_id = poem.id;
            req.prompts = plan.prompts;
            req.consistency = plan.consistency;
            req.seed = cfg.seed;
            req.width = cfg.width;
            req.height = cfg.height;
            auto outcomes = generate_sequence(req, *providers.backend);

            std::string poem_dir = "poems/" + fs_safe_id(poem.id);
            std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / poem_dir;
            std::filesystem::create_directories(dir);
            std::vector<std::string> files;
            for (size_t k = 0; k < outcomes.size(); ++k) {
                if (!outcomes[k].ok()) {
                    files.push_back("");
                    ++failures;
                    continue;
                }
                std::string rel = poem_dir + "/seg_" + std::to_string(k) + ".png";
                auto png = outcomes[k].artifact->png();
                std::ofstream img(std::filesystem::path(cfg.output_dir) / rel, std::ios::binary);
                img.write(reinterpret_cast<const char*>(png.data()), static_cast<long>(png.size()));
                files.push_back(rel);
                if (dump_features && outcomes[k].artifact->feature_map) {
                    const Matrix& m = *outcomes[k].artifact->feature_map;
                    write_npy((dir / ("seg_" + std::to_string(k) + "_features.npy")).string(),
                              m.d, {static_cast<size_t>(m.rows), static_cast<size_t>(m.cols)});
                }
            }
            std::ofstream seq(dir / "sequence.json");
            seq << sequence_manifest(poem.id, outcomes, files).dump(2) << "\n";
            std::cout << poem.id << ": " << files.size() << " artifacts\n";
        } catch (const std::exception& e) {
            std::cerr << poem.id << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const std::string& runs_path, const std::string& output_dir) {
    std::ifstream in(runs_path);
    if (!in) throw ConfigError("cannot open runs file: " + runs_path);
    nlohmann::json j = nlohmann::json::parse(in);
    std::vector<MetricReport> runs;
    for (const auto& item : j.is_array() ? j : j.at("runs"))
        runs.push_back(metric_from_json(item));
    ReportTable table = aggregate_report(runs);
    std::string text = render_report_text(table);
    if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::ofstream rj(std::filesystem::path(output_dir) / "report.json");
        rj << report_to_json(table).dump(2) << "\n";
        std::ofstream rt(std::filesystem::path(output_dir) / "report.txt");
        rt << text;
    }
    std::cout << text;
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& approach, long long seed,
            bool gallery) {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (!approach.empty()) cfg.approach = approach_from_string(approach);
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (gallery) cfg.gallery = true;

    RunResult result = run_pipeline(cfg);
    int ok = 0;
    for (const auto& p : result.poems)
        if (p.ok) ++ok;
    std::cout << ok << "/" << result.poems.size() << " poems completed; outputs in "
              << cfg.output_dir << "\n";
    std::cout << render_report_text(result.table);
    return result.any_failed ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"poem to image-sequence pipeline"};
    app.require_subcommand(1);

    std::string corpus_path, config_path, poem_id, policy_path, runs_path, output_dir, approach;
    int segment_index = -1;
    long long seed = -1;
    bool gallery = false;

    auto* stats = app.add_subcommand("stats", "corpus statistics");
    stats->add_option("corpus", corpus_path, "jsonl corpus file")->required();

    auto* validate = app.add_subcommand("validate", "per-poem validation reports");
    validate->add_option("corpus", corpus_path, "jsonl corpus file")->required();

    auto* segment = app.add_subcommand("segment", "segment one poem");
    segment->add_option("--corpus", corpus_path, "jsonl corpus file");
    segment->add_option("--config", config_path, "run config (json)");
    segment->add_option("--poem", poem_id, "poem id")->required();
    segment->add_option("--policy", policy_path, "boundary policy (json)");

    auto* refine = app.add_subcommand("refine", "refine descriptions for one poem");
    refine->add_option("--config", config_path, "run config (json)")->required();
    refine->add_option("--poem", poem_id, "poem id")->required();
    refine->add_option("--segment", segment_index, "segment index (default: all)");

    auto* generate = app.add_subcommand("generate", "generate image sequences");
    generate->add_option("--config", config_path, "run config (json)")->required();
    generate->add_option("--poem", poem_id, "poem id (default: all)");
    bool dump_features = false;
    generate->add_flag("--dump-features", dump_features,
                       "also write float64 .npy token-feature dumps (toy backend)");

    auto* evaluate = app.add_subcommand("evaluate", "aggregate metric rows into a report");
    evaluate->add_option("--runs", runs_path, "json file with metric rows")->required();
    evaluate->add_option("--output", output_dir, "directory for report.json/report.txt");

    auto* run = app.add_subcommand("run", "full pipeline run");
    run->add_option("--config", config_path, "run config (json)")->required();
    run->add_option("--approach", approach, "poemtale | segments_only | single_image");
    run->add_option("--seed", seed, "seed override");
    run->add_flag("--gallery", gallery, "emit gallery.html");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*stats) return cmd_stats(corpus_path);
        if (*validate) return cmd_validate(corpus_path);
        if (*segment) return cmd_segment(config_path, corpus_path, poem_id, policy_path);
        if (*refine) return cmd_refine(config_path, poem_id, segment_index);
        if (*generate) return cmd_generate(config_path, poem_id, dump_features);
        if (*evaluate) return cmd_evaluate(runs_path, output_dir);
        if (*run) return cmd_run(config_path, approach, seed, gallery);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
