#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "p2img/attention.hpp"
#include "p2img/png.hpp"

namespace p2img {

struct PromptItem {
    std::string segment_id;
    std::string text;
};

struct GenerationRequest {
    std::string poem_id;
    std::vector<PromptItem> prompts; // ordered by segment index
    bool consistency = false;
    std::string style_directives;
    uint64_t seed = 0;
    int width = 64;
    int height = 64;
};

struct ImageArtifact {
    std::string segment_id;
    Rgb8Image image;
    std::vector<uint8_t> png_bytes;    // as received from an HTTP backend, if any
    std::optional<Matrix> feature_map; // toy backend only, N x C
    std::map<std::string, std::string> backend_meta;
    std::string description; // generating prompt text

    // Encoded PNG: pass-through bytes when present, otherwise our encoder.
    std::vector<uint8_t> png() const;
};

struct BackendDescriptor {
    enum class Kind { Toy, Http };
    Kind kind = Kind::Toy;
    std::string endpoint;
    std::string model;
    std::map<std::string, std::string> options;
};

// Aligned one-to-one with the request's prompts; a failed slot carries its
// error instead of an artifact, so there are no silent gaps.
struct GenerationOutcome {
    std::string segment_id;
    std::optional<ImageArtifact> artifact;
    std::string error;
    bool ok() const { return artifact.has_value(); }
};

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    virtual std::vector<GenerationOutcome> run(const GenerationRequest& req) = 0;
    virtual std::string name() const = 0;
};

// Deterministic attention-based stand-in for a diffusion backbone: hashed
// token grids, two rounds of consistent self-attention over the sequence
// batch, then a linear RGB readout.
constexpr int kToyGridSide = 8;
constexpr int kToyTokens = kToyGridSide * kToyGridSide; // 64
constexpr int kToyChannels = 16;
constexpr int kToyRounds = 2;

std::vector<ImageArtifact> toy_generate(const std::vector<PromptItem>& prompts, uint64_t seed,
                                        const SamplingPolicy& policy, int width, int height);

class ToyBackend : public ImageBackend {
public:
    explicit ToyBackend(SamplingPolicy base_policy) : base_policy_(base_policy) {}
    std::vector<GenerationOutcome> run(const GenerationRequest& req) override;
    std::string name() const override { return "toy"; }

private:
    SamplingPolicy base_policy_;
};

std::vector<GenerationOutcome> generate_sequence(const GenerationRequest& req, ImageBackend& backend);

nlohmann::json sequence_manifest(const std::string& poem_id,
                                 const std::vector<GenerationOutcome>& outcomes,
                                 const std::vector<std::string>& files); // schema sequence/v1

} // namespace p2img
