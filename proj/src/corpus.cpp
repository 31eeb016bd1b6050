#include "p2img/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "p2img/hash.hpp"

namespace p2img {

const char* to_string(Emotion e) {
    switch (e) {
        case Emotion::Anger: return "anger";
        case Emotion::Disgust: return "disgust";
        case Emotion::Fear: return "fear";
        case Emotion::Joy: return "joy";
        case Emotion::Neutral: return "neutral";
        case Emotion::Sadness: return "sadness";
        case Emotion::Surprise: return "surprise";
    }
    return "neutral";
}

std::optional<Emotion> emotion_from_string(std::string_view s) {
    for (Emotion e : kAllEmotions)
        if (s == to_string(e)) return e;
    return std::nullopt;
}

std::string normalize_text(std::string_view raw) {
    std::string no_tags;
    no_tags.reserve(raw.size());
    for (size_t i = 0; i < raw.size();) {
        if (raw[i] == '<') {
            size_t close = raw.find('>', i);
            if (close != std::string_view::npos) {
                // A tag span acts as a separator so "a<br>b" keeps two words.
                no_tags.push_back(' ');
                i = close + 1;
                continue;
            }
        }
        no_tags.push_back(raw[i]);
        ++i;
    }

    std::string out;
    out.reserve(no_tags.size());
    bool pending_space = false;
    for (unsigned char c : no_tags) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (c < 0x20 || c == 0x7f) continue; // other control characters dropped
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(c));
    }
    return out;
}

int Poem::word_count() const {
    int count = 0;
    for (const auto& line : lines) {
        std::istringstream is(line);
        std::string w;
        while (is >> w) ++count;
    }
    return count;
}

std::string Poem::body_text() const {
    std::string out;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

namespace {

std::string stable_id(const std::string& title, const std::string& poet) {
    return "p" + hex64(fnv1a64(title + "\x1f" + poet));
}

struct RecordError {
    std::string code;
    std::string message;
};

Poem poem_from_record(const nlohmann::json& j) {
    if (!j.is_object()) throw RecordError{"not-object", "record is not a JSON object"};
    Poem p;
    auto get_str = [&](const char* key, bool required) -> std::string {
        if (!j.contains(key)) {
            if (required) throw RecordError{"missing-field", std::string("missing field '") + key + "'"};
            return "";
        }
        if (!j.at(key).is_string())
            throw RecordError{"bad-field", std::string("field '") + key + "' is not a string"};
        return j.at(key).get<std::string>();
    };
    p.id = get_str("id", false);
    p.title = normalize_text(get_str("title", true));
    p.poet = normalize_text(get_str("poet", true));
    p.theme = normalize_text(get_str("theme", true));
    p.protagonist = normalize_text(get_str("protagonist", false));

    if (!j.contains("lines") || !j.at("lines").is_array())
        throw RecordError{"missing-field", "missing or non-array field 'lines'"};
    for (const auto& item : j.at("lines")) {
        if (!item.is_string()) throw RecordError{"bad-field", "non-string entry in 'lines'"};
        std::string line = normalize_text(item.get<std::string>());
        if (line.empty()) {
            // Blank source line: stanza break before the next real line.
            int idx = static_cast<int>(p.lines.size());
            if (idx > 0 && (p.stanza_breaks.empty() || p.stanza_breaks.back() != idx))
                p.stanza_breaks.push_back(idx);
        } else {
            p.lines.push_back(std::move(line));
        }
    }
    // Trailing blank lines do not precede anything.
    while (!p.stanza_breaks.empty() && p.stanza_breaks.back() >= static_cast<int>(p.lines.size()))
        p.stanza_breaks.pop_back();
    if (p.lines.empty()) throw RecordError{"empty-poem", "poem has no non-blank lines"};

    if (j.contains("gold_segments")) {
        if (!j.at("gold_segments").is_array())
            throw RecordError{"bad-field", "'gold_segments' is not an array"};
        for (const auto& seg : j.at("gold_segments")) {
            GoldSegment g;
            if (!seg.is_object() || !seg.contains("start") || !seg.contains("end") ||
                !seg.contains("emotion"))
                throw RecordError{"bad-segment", "gold segment needs start, end, emotion"};
            g.start = seg.at("start").get<int>();
            g.end = seg.at("end").get<int>();
            auto emo = emotion_from_string(seg.at("emotion").get<std::string>());
            if (!emo)
                throw RecordError{"unknown-emotion",
                                  "unknown emotion label '" + seg.at("emotion").get<std::string>() + "'"};
            g.emotion = *emo;
            p.gold_segments.push_back(g);
        }
    }
    if (p.id.empty()) p.id = stable_id(p.title, p.poet);
    return p;
}

} // namespace

ParseResult parse_corpus(std::istream& in) {
    ParseResult result;
    std::unordered_set<std::string> seen_ids;
    std::unordered_set<std::string> seen_title_poet;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (blank) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            result.errors.push_back({"malformed-json", "line is not valid JSON", line_no, ""});
            continue;
        }
        try {
            Poem p = poem_from_record(j);
            std::string dup_key = p.title + "\x1f" + p.poet;
            if (!seen_ids.insert(p.id).second) {
                result.errors.push_back({"duplicate-id", "id '" + p.id + "' already present", line_no, p.id});
                continue;
            }
            if (!seen_title_poet.insert(dup_key).second) {
                result.errors.push_back(
                    {"duplicate-record", "duplicate (title, poet): " + p.title + " / " + p.poet, line_no, p.id});
                continue;
            }
            result.poems.push_back(std::move(p));
        } catch (const RecordError& e) {
            result.errors.push_back({e.code, e.message, line_no, ""});
        }
    }
    return result;
}

nlohmann::json poem_to_json(const Poem& p) {
    nlohmann::json j;
    j["id"] = p.id;
    j["title"] = p.title;
    j["poet"] = p.poet;
    j["theme"] = p.theme;
    if (!p.protagonist.empty()) j["protagonist"] = p.protagonist;
    nlohmann::json lines = nlohmann::json::array();
    for (size_t i = 0; i < p.lines.size(); ++i) {
        if (std::find(p.stanza_breaks.begin(), p.stanza_breaks.end(), static_cast<int>(i)) !=
            p.stanza_breaks.end())
            lines.push_back("");
        lines.push_back(p.lines[i]);
    }
    j["lines"] = lines;
    if (!p.gold_segments.empty()) {
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& g : p.gold_segments)
            segs.push_back({{"start", g.start}, {"end", g.end}, {"emotion", to_string(g.emotion)}});
        j["gold_segments"] = segs;
    }
    return j;
}

std::string serialize_corpus(const std::vector<Poem>& poems) {
    std::string out;
    for (const auto& p : poems) {
        out += poem_to_json(p).dump();
        out.push_back('\n');
    }
    return out;
}

ValidationReport validate_poem(const Poem& p) {
    ValidationReport r;
    r.poem_id = p.id;
    auto add = [&](std::string code, std::string message, std::string loc, bool error) {
        r.issues.push_back({std::move(code), std::move(message), std::move(loc), error});
    };

    if (p.title.empty()) add("empty-title", "poem has no title", "title", true);
    if (p.poet.empty()) add("empty-poet", "poem has no poet", "poet", true);

    for (size_t i = 0; i < p.lines.size(); ++i) {
        const std::string& line = p.lines[i];
        auto lt = line.find('<');
        if (lt != std::string::npos && line.find('>', lt) != std::string::npos)
            add("residual-html", "line contains an unstripped tag", "line " + std::to_string(i), true);
        if (i > 0 && line == p.lines[i - 1])
            add("duplicate-line", "identical consecutive lines", "line " + std::to_string(i), false);
    }

    if (!p.gold_segments.empty()) {
        int expected = 0;
        bool broken = false;
        for (size_t i = 0; i < p.gold_segments.size() && !broken; ++i) {
            const auto& g = p.gold_segments[i];
            if (g.start != expected || g.end <= g.start) {
                add("segment-coverage",
                    "gold segments must be ordered, disjoint, and gap-free (segment " +
                        std::to_string(i) + " starts at " + std::to_string(g.start) + ", expected " +
                        std::to_string(expected) + ")",
                    "gold_segments", true);
                broken = true;
            }
            expected = g.end;
        }
        if (!broken && expected != static_cast<int>(p.lines.size()))
            add("segment-coverage",
                "gold segments cover [0," + std::to_string(expected) + ") of " +
                    std::to_string(p.lines.size()) + " lines",
                "gold_segments", true);
    }

    r.passed = std::none_of(r.issues.begin(), r.issues.end(),
                            [](const ValidationIssue& i) { return i.error; });
    return r;
}

nlohmann::json validation_to_json(const ValidationReport& r) {
    nlohmann::json j;
    j["schema"] = "validation-report/v1";
    j["poem_id"] = r.poem_id;
    j["passed"] = r.passed;
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& i : r.issues)
        issues.push_back({{"code", i.code},
                          {"message", i.message},
                          {"location", i.location},
                          {"severity", i.error ? "error" : "warning"}});
    j["issues"] = issues;
    return j;
}

CorpusStats corpus_stats(const std::vector<Poem>& poems) {
    if (poems.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
    CorpusStats s;
    s.poem_count = static_cast<int>(poems.size());
    std::set<std::string> themes, poets;
    long total = 0;
    s.min_words = poems.front().word_count();
    s.max_words = s.min_words;
    for (const auto& p : poems) {
        int wc = p.word_count();
        total += wc;
        s.min_words = std::min(s.min_words, wc);
        s.max_words = std::max(s.max_words, wc);
        themes.insert(p.theme);
        poets.insert(p.poet);
    }
    s.mean_words = static_cast<double>(total) / static_cast<double>(poems.size());
    s.theme_count = static_cast<int>(themes.size());
    s.distinct_poets = static_cast<int>(poets.size());
    return s;
}

nlohmann::json stats_to_json(const CorpusStats& s) {
    return {{"schema", "corpus-stats/v1"},
            {"poem_count", s.poem_count},
            {"max_words", s.max_words},
            {"min_words", s.min_words},
            {"mean_words", s.mean_words},
            {"theme_count", s.theme_count},
            {"distinct_poets", s.distinct_poets}};
}

} // namespace p2img
