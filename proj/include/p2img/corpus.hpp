#pragma once

#include <array>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace p2img {

// Closed 7-label taxonomy; unknown strings are rejected at parse time.
enum class Emotion { Anger, Disgust, Fear, Joy, Neutral, Sadness, Surprise };

constexpr std::array<Emotion, 7> kAllEmotions = {
    Emotion::Anger, Emotion::Disgust, Emotion::Fear,    Emotion::Joy,
    Emotion::Neutral, Emotion::Sadness, Emotion::Surprise};

const char* to_string(Emotion e);
std::optional<Emotion> emotion_from_string(std::string_view s);

struct GoldSegment {
    int start = 0; // line index, inclusive
    int end = 0;   // line index, exclusive
    Emotion emotion = Emotion::Neutral;

    bool operator==(const GoldSegment&) const = default;
};

struct Poem {
    std::string id;
    std::string title;
    std::string poet;
    std::string theme;
    std::string protagonist;
    std::vector<std::string> lines;
    // Indices i such that a stanza break precedes lines[i]; blank source lines
    // become break markers rather than Poem lines.
    std::vector<int> stanza_breaks;
    std::vector<GoldSegment> gold_segments; // empty = not annotated

    bool operator==(const Poem&) const = default;

    int word_count() const;
    std::string body_text() const; // lines joined with '\n'
};

// Total function: strips HTML tags, removes control characters, collapses
// whitespace runs (including line joins) to single spaces, trims ends.
std::string normalize_text(std::string_view raw);

struct ParseIssue {
    std::string code;
    std::string message;
    int line_no = 0;      // 1-based line in the jsonl stream
    std::string poem_id;  // when known
};

struct ParseResult {
    std::vector<Poem> poems;
    std::vector<ParseIssue> errors;
};

// One JSON object per line. Malformed or invalid records are collected as
// errors and skipped; valid records are returned in input order. Missing ids
// are assigned from a stable hash of (normalized title, normalized poet);
// duplicate ids and duplicate (title, poet) pairs are record-level errors.
ParseResult parse_corpus(std::istream& in);

nlohmann::json poem_to_json(const Poem& p);
std::string serialize_corpus(const std::vector<Poem>& poems); // jsonl, inverse of parse_corpus

struct ValidationIssue {
    std::string code;
    std::string message;
    std::string location;
    bool error = true; // false = warning
};

struct ValidationReport {
    std::string poem_id;
    std::vector<ValidationIssue> issues;
    bool passed = true; // no error-severity issues
};

ValidationReport validate_poem(const Poem& p);
nlohmann::json validation_to_json(const ValidationReport& r); // schema validation-report/v1

struct CorpusStats {
    int poem_count = 0;
    int max_words = 0;
    int min_words = 0;
    double mean_words = 0.0;
    int theme_count = 0;
    int distinct_poets = 0;
};

// Word counts are over whitespace-tokenized normalized body text (titles are
// not counted). Throws std::invalid_argument on an empty list.
CorpusStats corpus_stats(const std::vector<Poem>& poems);
nlohmann::json stats_to_json(const CorpusStats& s); // schema corpus-stats/v1

} // namespace p2img
