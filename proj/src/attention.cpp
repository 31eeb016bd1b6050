#include "p2img/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "p2img/hash.hpp"

namespace p2img {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            double av = a.at(i, k);
            if (av == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += av * b.at(k, j);
        }
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (bottom.rows == 0) return top;
    if (top.cols != bottom.cols) throw std::invalid_argument("vstack: column counts differ");
    Matrix out(top.rows + bottom.rows, top.cols);
    std::copy(top.d.begin(), top.d.end(), out.d.begin());
    std::copy(bottom.d.begin(), bottom.d.end(), out.d.begin() + static_cast<long>(top.d.size()));
    return out;
}

Matrix FeatureBatch::image(int b) const {
    Matrix m(tokens, channels);
    std::copy(d.begin() + static_cast<long>(static_cast<size_t>(b) * tokens * channels),
              d.begin() + static_cast<long>(static_cast<size_t>(b + 1) * tokens * channels),
              m.d.begin());
    return m;
}

void FeatureBatch::set_image(int b, const Matrix& m) {
    if (m.rows != tokens || m.cols != channels)
        throw std::invalid_argument("set_image: shape mismatch");
    std::copy(m.d.begin(), m.d.end(),
              d.begin() + static_cast<long>(static_cast<size_t>(b) * tokens * channels));
}

ProjectionWeights ProjectionWeights::seeded(int channels, uint64_t seed) {
    double scale = 1.0 / std::sqrt(static_cast<double>(channels));
    auto fill = [&](uint64_t stream) {
        Matrix m(channels, channels);
        SeededRng rng(mix64(seed, stream));
        for (double& v : m.d) v = rng.uniform_pm1() * scale;
        return m;
    };
    ProjectionWeights w;
    w.w_q = fill(1);
    w.w_k = fill(2);
    w.w_v = fill(3);
    return w;
}

namespace {

void check_finite(const std::vector<double>& d, const char* what) {
    for (double v : d)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

void check_weights(const ProjectionWeights& w, int channels) {
    auto check = [&](const Matrix& m, const char* name) {
        if (m.rows != channels || m.cols != channels)
            throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(channels) +
                                        "x" + std::to_string(channels));
        check_finite(m.d, name);
    };
    check(w.w_q, "w_q");
    check(w.w_k, "w_k");
    check(w.w_v, "w_v");
    if (w.w_o) check(*w.w_o, "w_o");
}

// Rows of scores -> row-stochastic weights, numerically stable.
Matrix softmax_rows(const Matrix& scores) {
    Matrix out(scores.rows, scores.cols);
    for (int i = 0; i < scores.rows; ++i) {
        double m = scores.at(i, 0);
        for (int j = 1; j < scores.cols; ++j) m = std::max(m, scores.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < scores.cols; ++j) {
            double e = std::exp(scores.at(i, j) - m);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < scores.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

// Attention core shared by both entry points: Q rows attend over kv rows.
Matrix attend(const Matrix& queries, const Matrix& kv, const ProjectionWeights& w,
              AttentionDebug* debug) {
    int c = queries.cols;
    Matrix q = matmul(queries, w.w_q);
    Matrix k = matmul(kv, w.w_k);
    Matrix v = matmul(kv, w.w_v);

    double inv_scale = 1.0 / std::sqrt(static_cast<double>(c));
    Matrix scores(q.rows, k.rows);
    for (int i = 0; i < q.rows; ++i)
        for (int j = 0; j < k.rows; ++j) {
            double dot = 0.0;
            for (int t = 0; t < c; ++t) dot += q.at(i, t) * k.at(j, t);
            scores.at(i, j) = dot * inv_scale;
        }
    Matrix weights = softmax_rows(scores);
    if (debug) debug->weights = weights;

    Matrix out = matmul(weights, v);
    if (w.w_o) out = matmul(out, *w.w_o);
    return out;
}

} // namespace

Matrix self_attention(const Matrix& features, const ProjectionWeights& w, AttentionDebug* debug) {
    if (features.rows < 1 || features.cols < 1)
        throw std::invalid_argument("self_attention: empty feature matrix");
    check_finite(features.d, "features");
    check_weights(w, features.cols);
    return attend(features, features, w, debug);
}

SampledTokens rand_sample(const FeatureBatch& batch, int image, const SamplingPolicy& policy) {
    if (image < 0 || image >= batch.batch)
        throw std::invalid_argument("rand_sample: image index out of range");
    if (policy.rate < 0.0 || policy.rate > 1.0)
        throw std::invalid_argument("rand_sample: rate outside [0,1]");

    SampledTokens s;
    int per_image = static_cast<int>(std::floor(policy.rate * batch.tokens));
    if (per_image == 0) return s;

    int limit = policy.pool == SamplePool::PriorImagesOnly ? image : batch.batch;
    for (int src = 0; src < limit; ++src) {
        if (src == image) continue;
        // Partial Fisher-Yates over this source image's token indices, seeded
        // per (policy.seed, image, src) so draws are order-independent.
        SeededRng rng(mix64(mix64(policy.seed, static_cast<uint64_t>(image)),
                            static_cast<uint64_t>(src)));
        std::vector<int> idx(static_cast<size_t>(batch.tokens));
        std::iota(idx.begin(), idx.end(), 0);
        for (int t = 0; t < per_image; ++t) {
            size_t j = static_cast<size_t>(t) +
                       static_cast<size_t>(rng.bounded(static_cast<uint64_t>(batch.tokens - t)));
            std::swap(idx[static_cast<size_t>(t)], idx[j]);
        }
        std::sort(idx.begin(), idx.begin() + per_image);
        for (int t = 0; t < per_image; ++t) s.refs.push_back({src, idx[static_cast<size_t>(t)]});
    }
    return s;
}

Matrix SampledTokens::gather(const FeatureBatch& batch) const {
    Matrix m(static_cast<int>(refs.size()), batch.channels);
    for (size_t r = 0; r < refs.size(); ++r)
        for (int c = 0; c < batch.channels; ++c)
            m.at(static_cast<int>(r), c) = batch.at(refs[r].image, refs[r].token, c);
    return m;
}

AttentionOutput consistent_self_attention(const FeatureBatch& batch, const ProjectionWeights& w,
                                          const SamplingPolicy& policy,
                                          std::vector<AttentionDebug>* debug) {
    if (batch.batch < 1 || batch.tokens < 1 || batch.channels < 1)
        throw std::invalid_argument("consistent_self_attention: empty batch");
    check_finite(batch.d, "batch");
    check_weights(w, batch.channels);

    if (debug) debug->assign(static_cast<size_t>(batch.batch), AttentionDebug{});
    AttentionOutput out(batch.batch, batch.tokens, batch.channels);
    for (int i = 0; i < batch.batch; ++i) {
        Matrix own = batch.image(i);
        SampledTokens sampled = rand_sample(batch, i, policy);
        Matrix merged = vstack(own, sampled.gather(batch));
        AttentionDebug* dbg = debug ? &(*debug)[static_cast<size_t>(i)] : nullptr;
        out.set_image(i, attend(own, merged, w, dbg));
    }
    return out;
}

} // namespace p2img
