#include "p2img/segmentation.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace p2img {

std::set<EntityLabel> LineAnnotation::category_set() const {
    std::set<EntityLabel> cats;
    for (const auto& e : entities) cats.insert(e.label);
    return cats;
}

void BoundaryPolicy::validate() const {
    if (min_segment_lines < 1) throw ConfigError("policy: min_segment_lines must be >= 1");
    if (confidence_floor < 0.0 || confidence_floor > 1.0)
        throw ConfigError("policy: confidence_floor must be in [0,1]");
}

BoundaryPolicy policy_from_json(const nlohmann::json& j) {
    BoundaryPolicy p;
    if (j.contains("entity_shift_rule")) {
        std::string rule = j.at("entity_shift_rule").get<std::string>();
        if (rule == "set-inequality")
            p.entity_shift_rule = EntityShiftRule::SetInequality;
        else if (rule == "new-entity-introduced")
            p.entity_shift_rule = EntityShiftRule::NewEntityIntroduced;
        else
            throw ConfigError("policy: unknown entity_shift_rule '" + rule + "'");
    }
    if (j.contains("emotion_shift_rule")) {
        std::string rule = j.at("emotion_shift_rule").get<std::string>();
        if (rule != "label-change")
            throw ConfigError("policy: unknown emotion_shift_rule '" + rule + "'");
    }
    if (j.contains("min_segment_lines")) p.min_segment_lines = j.at("min_segment_lines").get<int>();
    if (j.contains("confidence_floor")) p.confidence_floor = j.at("confidence_floor").get<double>();
    p.validate();
    return p;
}

nlohmann::json policy_to_json(const BoundaryPolicy& p) {
    return {{"entity_shift_rule", p.entity_shift_rule == EntityShiftRule::SetInequality
                                      ? "set-inequality"
                                      : "new-entity-introduced"},
            {"emotion_shift_rule", "label-change"},
            {"min_segment_lines", p.min_segment_lines},
            {"confidence_floor", p.confidence_floor}};
}

std::string Segment::text(const Poem& poem) const {
    std::string out;
    for (int i = start; i < end && i < static_cast<int>(poem.lines.size()); ++i) {
        if (i > start) out.push_back('\n');
        out += poem.lines[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<LineAnnotation> annotate_lines(const Poem& poem, EntityTagger& tagger,
                                           EmotionClassifier& classifier,
                                           const BoundaryPolicy& policy) {
    if (poem.lines.empty()) throw std::invalid_argument("annotate_lines: poem has no lines");
    policy.validate();

    std::vector<std::vector<EntitySpan>> entities;
    std::vector<EmotionPrediction> emotions;
    try {
        entities = tagger.tag(poem.lines);
        emotions = classifier.classify(poem.lines);
    } catch (const ProviderError& e) {
        throw ProviderError("annotate_lines: poem " + poem.id + ": " + e.what(), e.retryable());
    }
    if (entities.size() != poem.lines.size())
        throw ProviderError("annotate_lines: tagger returned " + std::to_string(entities.size()) +
                                " annotations for " + std::to_string(poem.lines.size()) + " lines",
                            false);
    if (emotions.size() != poem.lines.size())
        throw ProviderError("annotate_lines: classifier returned " +
                                std::to_string(emotions.size()) + " annotations for " +
                                std::to_string(poem.lines.size()) + " lines",
                            false);

    std::vector<LineAnnotation> out;
    out.reserve(poem.lines.size());
    for (size_t i = 0; i < poem.lines.size(); ++i) {
        LineAnnotation a;
        a.line_index = static_cast<int>(i);
        a.entities = entities[i];
        a.emotion = emotions[i].label;
        a.emotion_confidence = emotions[i].confidence;
        if (a.emotion_confidence < 0.0 || a.emotion_confidence > 1.0)
            throw ProviderError("annotate_lines: confidence " +
                                    std::to_string(a.emotion_confidence) + " outside [0,1] at line " +
                                    std::to_string(i),
                                false);
        if (a.emotion_confidence < policy.confidence_floor) a.emotion = Emotion::Neutral;
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

bool entity_shift(const LineAnnotation& prev, const LineAnnotation& cur, EntityShiftRule rule) {
    std::set<EntityLabel> a = prev.category_set();
    std::set<EntityLabel> b = cur.category_set();
    if (rule == EntityShiftRule::SetInequality) return a != b;
    // NewEntityIntroduced: a category appears that the previous line lacked.
    for (EntityLabel l : b)
        if (!a.count(l)) return true;
    return false;
}

bool shift_between(const LineAnnotation& prev, const LineAnnotation& cur,
                   const BoundaryPolicy& policy) {
    if (cur.emotion != prev.emotion) return true;
    return entity_shift(prev, cur, policy.entity_shift_rule);
}

} // namespace

std::vector<int> detect_boundaries(const std::vector<LineAnnotation>& annotations,
                                   const BoundaryPolicy& policy) {
    if (annotations.empty()) throw std::invalid_argument("detect_boundaries: no annotations");
    policy.validate();

    std::vector<int> candidates;
    for (size_t i = 1; i < annotations.size(); ++i)
        if (shift_between(annotations[i - 1], annotations[i], policy))
            candidates.push_back(static_cast<int>(i));

    int total = static_cast<int>(annotations.size());
    std::vector<int> kept;
    int last = 0;
    for (int b : candidates) {
        if (b - last >= policy.min_segment_lines) {
            kept.push_back(b);
            last = b;
        }
    }
    if (!kept.empty() && total - kept.back() < policy.min_segment_lines) kept.pop_back();
    return kept;
}

std::vector<Segment> segment_poem(const Poem& poem, const std::vector<LineAnnotation>& annotations,
                                  const BoundaryPolicy& policy) {
    if (annotations.size() != poem.lines.size())
        throw std::invalid_argument("segment_poem: annotation count does not match line count");

    std::vector<int> boundaries = detect_boundaries(annotations, policy);
    std::vector<int> starts{0};
    starts.insert(starts.end(), boundaries.begin(), boundaries.end());

    std::vector<Segment> segments;
    for (size_t s = 0; s < starts.size(); ++s) {
        Segment seg;
        seg.poem_id = poem.id;
        seg.index = static_cast<int>(s);
        seg.start = starts[s];
        seg.end = s + 1 < starts.size() ? starts[s + 1] : static_cast<int>(poem.lines.size());

        std::map<Emotion, int> counts;
        std::map<Emotion, double> confidence;
        for (int i = seg.start; i < seg.end; ++i) {
            const auto& a = annotations[static_cast<size_t>(i)];
            counts[a.emotion] += 1;
            confidence[a.emotion] += a.emotion_confidence;
            for (const auto& e : a.entities) seg.entities.push_back(e);
        }
        std::sort(seg.entities.begin(), seg.entities.end());
        seg.entities.erase(std::unique(seg.entities.begin(), seg.entities.end()),
                           seg.entities.end());

        int max_count = 0;
        for (const auto& [emotion, count] : counts) max_count = std::max(max_count, count);
        std::set<Emotion> tied;
        for (const auto& [emotion, count] : counts)
            if (count == max_count) tied.insert(emotion);
        if (tied.size() > 1) {
            double max_conf = 0.0;
            for (Emotion e : tied) max_conf = std::max(max_conf, confidence[e]);
            std::set<Emotion> by_conf;
            for (Emotion e : tied)
                if (confidence[e] == max_conf) by_conf.insert(e);
            tied = by_conf;
        }
        seg.dominant_emotion = *tied.begin();
        if (tied.size() > 1) {
            for (int i = seg.start; i < seg.end; ++i) {
                Emotion e = annotations[static_cast<size_t>(i)].emotion;
                if (tied.count(e)) {
                    seg.dominant_emotion = e;
                    break;
                }
            }
        }
        segments.push_back(std::move(seg));
    }
    return segments;
}

nlohmann::json segments_to_json(const std::vector<Segment>& segments, const Poem& poem) {
    nlohmann::json j;
    j["schema"] = "segments/v1";
    j["poem_id"] = poem.id;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : segments) {
        nlohmann::json entities = nlohmann::json::array();
        for (const auto& e : s.entities)
            entities.push_back({{"surface", e.surface}, {"label", to_string(e.label)}});
        arr.push_back({{"id", s.id()},
                       {"index", s.index},
                       {"start", s.start},
                       {"end", s.end},
                       {"dominant_emotion", to_string(s.dominant_emotion)},
                       {"entities", entities},
                       {"text", s.text(poem)}});
    }
    j["segments"] = arr;
    return j;
}

double gold_boundary_agreement(const std::vector<Segment>& segments, const Poem& poem) {
    std::set<int> epe, gold;
    for (const auto& s : segments)
        if (s.start > 0) epe.insert(s.start);
    for (const auto& g : poem.gold_segments)
        if (g.start > 0) gold.insert(g.start);
    if (epe.empty() && gold.empty()) return 1.0;
    std::vector<int> inter;
    std::set_intersection(epe.begin(), epe.end(), gold.begin(), gold.end(),
                          std::back_inserter(inter));
    std::set<int> uni = epe;
    uni.insert(gold.begin(), gold.end());
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

} // namespace p2img
