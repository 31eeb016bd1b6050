#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace p2img {

// Dense row-major matrix of doubles. The kernel keeps its own minimal type so
// every arithmetic step stays explicit and oracle-comparable.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix vstack(const Matrix& top, const Matrix& bottom);

// B images, N tokens each, C channels; data laid out [b][n][c].
struct FeatureBatch {
    int batch = 0;
    int tokens = 0;
    int channels = 0;
    std::vector<double> d;

    FeatureBatch() = default;
    FeatureBatch(int b, int n, int c)
        : batch(b), tokens(n), channels(c), d(static_cast<size_t>(b) * n * c, 0.0) {}

    double& at(int b, int n, int c) {
        return d[(static_cast<size_t>(b) * tokens + n) * channels + c];
    }
    double at(int b, int n, int c) const {
        return d[(static_cast<size_t>(b) * tokens + n) * channels + c];
    }
    Matrix image(int b) const; // N x C slice
    void set_image(int b, const Matrix& m);

    bool operator==(const FeatureBatch&) const = default;
};

using AttentionOutput = FeatureBatch;

struct ProjectionWeights {
    Matrix w_q, w_k, w_v;        // C x C
    std::optional<Matrix> w_o;   // optional C x C output projection

    // Uniform values in [-1,1)/sqrt(C) from a seeded stream.
    static ProjectionWeights seeded(int channels, uint64_t seed);
};

enum class SamplePool { AllOtherImages, PriorImagesOnly };

struct SamplingPolicy {
    double rate = 0.5; // fraction of each eligible image's tokens
    uint64_t seed = 0;
    SamplePool pool = SamplePool::AllOtherImages;
};

struct TokenRef {
    int image = 0;
    int token = 0;
    bool operator==(const TokenRef&) const = default;
};

// Reference tokens drawn for one image: which (image, token) slots were
// sampled, plus the gathered feature rows.
struct SampledTokens {
    std::vector<TokenRef> refs;
    Matrix gather(const FeatureBatch& batch) const; // |refs| x C
};

// Per-image attention weights (rows sum to 1) for debugging/verification.
struct AttentionDebug {
    Matrix weights;
};

// softmax(Q K^T / sqrt(C)) V with Q=XWq, K=XWk, V=XWv and optional Wo.
Matrix self_attention(const Matrix& features, const ProjectionWeights& w,
                      AttentionDebug* debug = nullptr);

// Draws floor(rate*N) token indices uniformly without replacement from each
// eligible other image. Eligibility follows policy.pool; image i itself is
// never sampled. Refs are ordered by source image, then ascending token index,
// and are a pure function of (seed, i, shapes, policy).
SampledTokens rand_sample(const FeatureBatch& batch, int image, const SamplingPolicy& policy);

// Per image i: P_i = [tokens of image i; sampled reference tokens], K/V are
// projected from P_i with the same weights as self_attention, Q from image i
// only. rate=0 reduces to independent per-image self_attention.
AttentionOutput consistent_self_attention(const FeatureBatch& batch, const ProjectionWeights& w,
                                          const SamplingPolicy& policy,
                                          std::vector<AttentionDebug>* debug = nullptr);

} // namespace p2img
