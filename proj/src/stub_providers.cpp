#include "p2img/stub_providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "p2img/hash.hpp"

namespace p2img {

std::vector<std::string> lowercase_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'') {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

uint64_t entries_hash(const std::map<std::string, EntityLabel>& entries) {
    uint64_t h = kFnvOffset;
    for (const auto& [surface, label] : entries) {
        h = fnv1a64(surface, h);
        h = fnv1a64(to_string(label), h);
    }
    return h;
}

uint64_t lexicon_hash(const std::map<Emotion, std::vector<std::string>>& lex) {
    uint64_t h = kFnvOffset;
    for (const auto& [emotion, words] : lex) {
        h = fnv1a64(to_string(emotion), h);
        for (const auto& w : words) h = fnv1a64(w, h);
    }
    return h;
}

} // namespace

GazetteerTagger::GazetteerTagger(std::map<std::string, EntityLabel> entries)
    : entries_(std::move(entries)),
      descriptor_("stub-tagger/gazetteer-" + hex64(entries_hash(entries_))) {}

std::map<std::string, EntityLabel> GazetteerTagger::default_entries() {
    return {
        {"ozymandias", EntityLabel::Person},
        {"the king", EntityLabel::Person},
        {"the traveller", EntityLabel::Person},
        {"the miller", EntityLabel::Person},
        {"eleni", EntityLabel::Person},
        {"old tom", EntityLabel::Person},
        {"marta", EntityLabel::Person},
        {"the harbor", EntityLabel::Location},
        {"the valley", EntityLabel::Location},
        {"the city", EntityLabel::Location},
        {"avonlea", EntityLabel::Location},
        {"the guild", EntityLabel::Organization},
        {"the parliament", EntityLabel::Organization},
    };
}

std::vector<std::vector<EntitySpan>> GazetteerTagger::tag(const std::vector<std::string>& lines) {
    calls_.fetch_add(1);
    std::vector<std::vector<EntitySpan>> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        std::vector<EntitySpan> spans;
        std::vector<std::string> words = lowercase_words(line);
        for (size_t i = 0; i < words.size(); ++i) {
            std::string phrase;
            for (size_t len = 1; len <= 3 && i + len <= words.size(); ++len) {
                if (len > 1) phrase += ' ';
                phrase += words[i + len - 1];
                auto it = entries_.find(phrase);
                if (it != entries_.end()) spans.push_back({it->first, it->second});
            }
        }
        std::sort(spans.begin(), spans.end());
        spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
        out.push_back(std::move(spans));
    }
    return out;
}

LexiconClassifier::LexiconClassifier(std::map<Emotion, std::vector<std::string>> lexicon)
    : lexicon_(std::move(lexicon)),
      descriptor_("stub-classifier/lexicon-" + hex64(lexicon_hash(lexicon_))) {}

std::map<Emotion, std::vector<std::string>> LexiconClassifier::default_lexicon() {
    return {
        {Emotion::Anger, {"rage", "wrath", "fury", "burn", "storm", "curse"}},
        {Emotion::Disgust, {"vile", "rot", "filth", "loathe", "sour"}},
        {Emotion::Fear, {"fear", "dread", "tremble", "shadow", "pale"}},
        {Emotion::Joy, {"joy", "bright", "dance", "laugh", "delight", "golden", "sun"}},
        {Emotion::Sadness, {"weep", "tear", "tears", "grief", "sorrow", "mourn", "cold", "grave"}},
        {Emotion::Surprise, {"sudden", "wonder", "behold", "astonish", "gasp"}},
    };
}

std::vector<EmotionPrediction> LexiconClassifier::classify(const std::vector<std::string>& lines) {
    calls_.fetch_add(1);
    std::vector<EmotionPrediction> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        std::vector<std::string> words = lowercase_words(line);
        int total = 0;
        Emotion best = Emotion::Neutral;
        int best_hits = 0;
        for (const auto& [emotion, keywords] : lexicon_) {
            int hits = 0;
            for (const auto& w : words)
                if (std::find(keywords.begin(), keywords.end(), w) != keywords.end()) ++hits;
            total += hits;
            if (hits > best_hits) {
                best_hits = hits;
                best = emotion;
            }
        }
        if (best_hits == 0)
            out.push_back({Emotion::Neutral, 0.0});
        else
            out.push_back({best, static_cast<double>(best_hits) / static_cast<double>(total)});
    }
    return out;
}

std::string StubGenerator::generate(const GenRequest& req) {
    calls_.fetch_add(1);
    std::string prompt;
    for (const auto& m : req.messages) {
        if (!prompt.empty()) prompt.push_back('\n');
        prompt += m.content;
    }

    auto section = [&](const std::string& header) -> std::string {
        size_t pos = prompt.find(header);
        if (pos == std::string::npos) return "";
        size_t start = pos + header.size();
        size_t end = prompt.find("\n\n", start);
        if (end == std::string::npos) end = prompt.size();
        std::string text = prompt.substr(start, end - start);
        while (!text.empty() && (text.front() == '\n' || text.front() == ' ')) text.erase(text.begin());
        while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
        return text;
    };

    static const char* kEmbellishments[] = {
        "lit by a low golden sun",     "wrapped in drifting mist",
        "framed by distant hills",     "under a wide violet sky",
        "with long soft shadows",      "rendered in muted watercolor",
        "heavy with quiet stillness",  "alive with small bright details",
    };

    std::string previous = section("Previous description:");
    if (!previous.empty()) {
        size_t pick = fnv1a64(previous) % (sizeof(kEmbellishments) / sizeof(kEmbellishments[0]));
        return previous + ", " + kEmbellishments[pick];
    }
    std::string segment = section("Segment:");
    if (!segment.empty()) {
        std::string flat = normalize_text(segment);
        return "A vivid scene of " + flat;
    }
    // Unknown prompt shape: echo the last non-empty line.
    std::istringstream is(prompt);
    std::string line, last;
    while (std::getline(is, line))
        if (!normalize_text(line).empty()) last = normalize_text(line);
    return last;
}

StubEmbedder::StubEmbedder(uint64_t seed, Mode mode) : seed_(seed), mode_(mode) {}

std::string StubEmbedder::descriptor_id() const {
    return std::string("stub-embedder/") + (mode_ == Mode::CharNgram ? "ngram" : "wordbag") + "-" +
           hex64(seed_);
}

std::vector<double> StubEmbedder::embed_text(const std::string& text) {
    calls_.fetch_add(1);
    if (text.empty()) throw ProviderError("stub embedder: empty text", false);

    std::vector<uint64_t> grams;
    if (mode_ == Mode::WordBag) {
        for (const auto& w : lowercase_words(text)) grams.push_back(fnv1a64(w));
        if (grams.empty()) grams.push_back(fnv1a64(lower(text)));
    } else {
        std::string s = lower(text);
        if (s.size() < 3) {
            grams.push_back(fnv1a64(s));
        } else {
            for (size_t i = 0; i + 3 <= s.size(); ++i)
                grams.push_back(fnv1a64(std::string_view(s).substr(i, 3)));
        }
    }

    std::vector<double> v(kDim, 0.0);
    for (uint64_t g : grams)
        for (int d = 0; d < kDim; ++d) {
            uint64_t u = mix64(mix64(seed_, g), static_cast<uint64_t>(d));
            v[static_cast<size_t>(d)] += (u & 1) ? 1.0 : -1.0;
        }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

std::vector<double> StubEmbedder::embed_image(const ImageArtifact& image) {
    if (!image.description.empty()) return embed_text(image.description);
    std::string bytes(image.image.pixels.begin(), image.image.pixels.end());
    return embed_text(bytes.empty() ? std::string("empty image") : bytes);
}

std::string StubCaptioner::caption(const ImageArtifact& image) {
    calls_.fetch_add(1);
    if (!image.description.empty()) return image.description;
    return "an abstract composition of colored patches";
}

} // namespace p2img
