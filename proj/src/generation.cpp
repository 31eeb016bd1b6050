#include "p2img/generation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "p2img/hash.hpp"

namespace p2img {

namespace {

// Text -> N x C token grid. Each cell is an independent pseudo-random value
// derived from (seed, fnv(text), token, channel), so equal descriptions embed
// identically and any text change moves every token.
Matrix embed_description(const std::string& text, uint64_t seed) {
    Matrix m(kToyTokens, kToyChannels);
    uint64_t text_h = fnv1a64(text);
    for (int n = 0; n < kToyTokens; ++n)
        for (int c = 0; c < kToyChannels; ++c) {
            uint64_t u = mix64(mix64(seed, text_h),
                               (static_cast<uint64_t>(n) << 32) | static_cast<uint64_t>(c));
            m.at(n, c) = unit_pm1(splitmix64(u));
        }
    return m;
}

// C -> 3 linear readout weights from the seeded stream.
Matrix rgb_readout_weights(uint64_t seed) {
    Matrix w(kToyChannels, 3);
    SeededRng rng(mix64(seed, 0x52474230ULL)); // "RGB0"
    for (double& v : w.d) v = rng.uniform_pm1();
    return w;
}

uint8_t to_byte(double v) {
    double t = std::tanh(v); // [-1,1]
    double scaled = (t + 1.0) * 0.5 * 255.0;
    return static_cast<uint8_t>(std::lround(std::clamp(scaled, 0.0, 255.0)));
}

} // namespace

std::vector<uint8_t> ImageArtifact::png() const {
    if (!png_bytes.empty()) return png_bytes;
    return encode_png_rgb8(image);
}

std::vector<ImageArtifact> toy_generate(const std::vector<PromptItem>& prompts, uint64_t seed,
                                        const SamplingPolicy& policy, int width, int height) {
    if (prompts.empty()) throw std::invalid_argument("toy_generate: no prompts");
    for (const auto& p : prompts)
        if (p.text.empty()) throw std::invalid_argument("toy_generate: empty description text");
    if (width <= 0 || height <= 0) throw std::invalid_argument("toy_generate: bad size");

    int b = static_cast<int>(prompts.size());
    FeatureBatch batch(b, kToyTokens, kToyChannels);
    for (int i = 0; i < b; ++i) batch.set_image(i, embed_description(prompts[static_cast<size_t>(i)].text, seed));

    ProjectionWeights w = ProjectionWeights::seeded(kToyChannels, mix64(seed, 0x70726f6aULL)); // "proj"
    for (int round = 0; round < kToyRounds; ++round)
        batch = consistent_self_attention(batch, w, policy);

    Matrix readout = rgb_readout_weights(seed);
    std::vector<ImageArtifact> artifacts;
    artifacts.reserve(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        ImageArtifact art;
        art.segment_id = prompts[static_cast<size_t>(i)].segment_id;
        art.description = prompts[static_cast<size_t>(i)].text;
        art.feature_map = batch.image(i);
        Matrix rgb = matmul(*art.feature_map, readout); // kToyTokens x 3

        art.image.width = width;
        art.image.height = height;
        art.image.pixels.resize(static_cast<size_t>(width) * height * 3);
        for (int y = 0; y < height; ++y) {
            int gy = y * kToyGridSide / height;
            for (int x = 0; x < width; ++x) {
                int gx = x * kToyGridSide / width;
                int token = gy * kToyGridSide + gx;
                for (int ch = 0; ch < 3; ++ch)
                    art.image.at(x, y, ch) = to_byte(rgb.at(token, ch));
            }
        }
        art.backend_meta["model"] = "toy";
        art.backend_meta["sampler"] = "none";
        artifacts.push_back(std::move(art));
    }
    return artifacts;
}

std::vector<GenerationOutcome> ToyBackend::run(const GenerationRequest& req) {
    SamplingPolicy policy = base_policy_;
    policy.seed = req.seed;
    if (req.consistency) {
        // First image anchors the sequence; later images reference earlier ones.
        policy.pool = SamplePool::PriorImagesOnly;
    } else {
        policy.rate = 0.0;
    }
    std::vector<ImageArtifact> arts = toy_generate(req.prompts, req.seed, policy, req.width, req.height);
    std::vector<GenerationOutcome> out;
    out.reserve(arts.size());
    for (auto& a : arts) {
        GenerationOutcome o;
        o.segment_id = a.segment_id;
        o.artifact = std::move(a);
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<GenerationOutcome> generate_sequence(const GenerationRequest& req, ImageBackend& backend) {
    if (req.prompts.empty()) throw std::invalid_argument("generate_sequence: no prompts");
    std::vector<GenerationOutcome> outcomes = backend.run(req);
    if (outcomes.size() != req.prompts.size())
        throw std::runtime_error("generate_sequence: backend returned wrong cardinality");
    for (auto& o : outcomes) {
        if (!o.ok()) continue;
        const auto& img = o.artifact->image;
        if (img.width != req.width || img.height != req.height) {
            o.error = "backend returned " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + ", requested " + std::to_string(req.width) + "x" +
                      std::to_string(req.height);
            o.artifact.reset();
        }
    }
    return outcomes;
}

nlohmann::json sequence_manifest(const std::string& poem_id,
                                 const std::vector<GenerationOutcome>& outcomes,
                                 const std::vector<std::string>& files) {
    nlohmann::json j;
    j["schema"] = "sequence/v1";
    j["poem_id"] = poem_id;
    nlohmann::json arts = nlohmann::json::array();
    for (size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        nlohmann::json item;
        item["segment_id"] = o.segment_id;
        if (o.ok()) {
            item["file"] = i < files.size() ? files[i] : "";
            nlohmann::json meta;
            for (const auto& [k, v] : o.artifact->backend_meta) meta[k] = v;
            meta["description"] = o.artifact->description;
            item["meta"] = meta;
        } else {
            item["error"] = o.error;
        }
        arts.push_back(item);
    }
    j["artifacts"] = arts;
    return j;
}

} // namespace p2img
