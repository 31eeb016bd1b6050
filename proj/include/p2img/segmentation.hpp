#pragma once

#include <set>
#include <string>
#include <vector>

#include "p2img/corpus.hpp"
#include "p2img/providers.hpp"

namespace p2img {

struct LineAnnotation {
    int line_index = 0;
    std::vector<EntitySpan> entities;
    Emotion emotion = Emotion::Neutral;
    double emotion_confidence = 0.0;

    std::set<EntityLabel> category_set() const;
};

enum class EntityShiftRule { SetInequality, NewEntityIntroduced };
enum class EmotionShiftRule { LabelChange };

struct BoundaryPolicy {
    EntityShiftRule entity_shift_rule = EntityShiftRule::SetInequality;
    EmotionShiftRule emotion_shift_rule = EmotionShiftRule::LabelChange;
    int min_segment_lines = 2;
    double confidence_floor = 0.0;

    void validate() const; // throws ConfigError
};

BoundaryPolicy policy_from_json(const nlohmann::json& j);
nlohmann::json policy_to_json(const BoundaryPolicy& p);

struct Segment {
    std::string poem_id;
    int index = 0;
    int start = 0; // inclusive
    int end = 0;   // exclusive
    Emotion dominant_emotion = Emotion::Neutral;
    std::vector<EntitySpan> entities; // union over member lines

    std::string id() const { return poem_id + "/s" + std::to_string(index); }
    std::string text(const Poem& poem) const; // member lines joined with '\n'
};

// One annotation per line, in order. Emotions whose confidence falls below
// policy.confidence_floor are replaced by neutral. Provider failures retry
// per the provider's own policy and then surface as ProviderError.
std::vector<LineAnnotation> annotate_lines(const Poem& poem, EntityTagger& tagger,
                                           EmotionClassifier& classifier,
                                           const BoundaryPolicy& policy);

// A shift between lines i-1 and i (emotion label change OR entity rule fire)
// emits a candidate boundary at i. Candidates are then suppressed greedily
// left to right: a boundary survives only if the segment it closes has at
// least min_segment_lines lines, and a too-short final segment merges into
// its left neighbour by dropping the last kept boundary.
std::vector<int> detect_boundaries(const std::vector<LineAnnotation>& annotations,
                                   const BoundaryPolicy& policy);

// Dominant emotion = modal label over the segment's lines; ties break by
// higher summed confidence, then by the earliest line's emotion.
std::vector<Segment> segment_poem(const Poem& poem, const std::vector<LineAnnotation>& annotations,
                                  const BoundaryPolicy& policy);

nlohmann::json segments_to_json(const std::vector<Segment>& segments, const Poem& poem);

// Jaccard index between EPE boundaries and gold segment boundaries (interior
// boundary positions); 1.0 when both sets are empty.
double gold_boundary_agreement(const std::vector<Segment>& segments, const Poem& poem);

} // namespace p2img
