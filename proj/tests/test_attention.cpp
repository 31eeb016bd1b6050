#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <random>

#include "p2img/attention.hpp"
#include "p2img/npy.hpp"
#include "support/oracles.hpp"

using namespace p2img;

namespace {

ProjectionWeights identity_weights(int c) {
    ProjectionWeights w;
    w.w_q = Matrix(c, c);
    w.w_k = Matrix(c, c);
    w.w_v = Matrix(c, c);
    for (int i = 0; i < c; ++i) {
        w.w_q.at(i, i) = 1.0;
        w.w_k.at(i, i) = 1.0;
        w.w_v.at(i, i) = 1.0;
    }
    return w;
}

FeatureBatch random_batch(std::mt19937_64& rng, int b, int n, int c) {
    FeatureBatch batch(b, n, c);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (double& v : batch.d) v = dist(rng);
    return batch;
}

oracle::Mat to_oracle(const Matrix& m) {
    oracle::Mat out = oracle::make(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out[static_cast<size_t>(r)][static_cast<size_t>(c)] = m.at(r, c);
    return out;
}

std::vector<oracle::Mat> to_oracle(const FeatureBatch& b) {
    std::vector<oracle::Mat> out;
    for (int i = 0; i < b.batch; ++i) out.push_back(to_oracle(b.image(i)));
    return out;
}

double max_abs_diff(const Matrix& got, const oracle::Mat& want) {
    double worst = 0.0;
    for (int r = 0; r < got.rows; ++r)
        for (int c = 0; c < got.cols; ++c)
            worst = std::max(worst, std::abs(got.at(r, c) - want[static_cast<size_t>(r)][static_cast<size_t>(c)]));
    return worst;
}

} // namespace

TEST_CASE("single token attention is identity on V") {
    Matrix x(1, 2);
    x.at(0, 0) = 1.0;
    x.at(0, 1) = 2.0;
    Matrix out = self_attention(x, identity_weights(2));
    CHECK(out.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("all-zero input gives all-zero output") {
    Matrix x(3, 4);
    ProjectionWeights w = ProjectionWeights::seeded(4, 99);
    Matrix out = self_attention(x, w);
    for (double v : out.d) CHECK(v == 0.0);
}

TEST_CASE("2x2 fixture matches dense-loop oracle") {
    Matrix x(2, 2);
    x.at(0, 0) = 0.3;
    x.at(0, 1) = -1.2;
    x.at(1, 0) = 2.0;
    x.at(1, 1) = 0.7;
    ProjectionWeights w = ProjectionWeights::seeded(2, 7);
    Matrix got = self_attention(x, w);
    oracle::Mat want = oracle::attention(to_oracle(x), to_oracle(x), to_oracle(w.w_q),
                                         to_oracle(w.w_k), to_oracle(w.w_v));
    CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("shape and finiteness errors") {
    Matrix x(2, 3);
    CHECK_THROWS_AS(self_attention(x, identity_weights(2)), std::invalid_argument);
    Matrix bad(1, 2);
    bad.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(self_attention(bad, identity_weights(2)), std::invalid_argument);
    FeatureBatch fb(1, 1, 2);
    fb.d[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(consistent_self_attention(fb, identity_weights(2), {}), std::invalid_argument);
}

TEST_CASE("rand_sample edge cases") {
    std::mt19937_64 rng(1);
    FeatureBatch batch = random_batch(rng, 3, 4, 2);

    SamplingPolicy zero{0.0, 42, SamplePool::AllOtherImages};
    CHECK(rand_sample(batch, 0, zero).refs.empty());

    FeatureBatch lone = random_batch(rng, 1, 4, 2);
    SamplingPolicy full{1.0, 42, SamplePool::AllOtherImages};
    CHECK(rand_sample(lone, 0, full).refs.empty());

    SamplingPolicy prior{1.0, 42, SamplePool::PriorImagesOnly};
    CHECK(rand_sample(batch, 0, prior).refs.empty()); // image 0 has no priors
    CHECK(rand_sample(batch, 2, prior).refs.size() == 8);

    CHECK_THROWS_AS(rand_sample(batch, 5, zero), std::invalid_argument);
}

TEST_CASE("sampled indices reproduced by the independent sampler") {
    std::mt19937_64 rng(17);
    FeatureBatch batch = random_batch(rng, 3, 4, 2);
    SamplingPolicy policy{0.5, 17, SamplePool::AllOtherImages};
    for (int i = 0; i < 3; ++i) {
        SampledTokens got = rand_sample(batch, i, policy);
        auto want = oracle::sample_refs(3, 4, 0.5, 17, i, false);
        REQUIRE(got.refs.size() == want.size());
        for (size_t r = 0; r < want.size(); ++r) {
            CHECK(got.refs[r].image == want[r].first);
            CHECK(got.refs[r].token == want[r].second);
        }
    }
}

TEST_CASE("rate zero reduces to per-image self attention") {
    std::mt19937_64 rng(5);
    FeatureBatch batch = random_batch(rng, 3, 5, 4);
    ProjectionWeights w = ProjectionWeights::seeded(4, 11);
    AttentionOutput out = consistent_self_attention(batch, w, {0.0, 9, SamplePool::AllOtherImages});
    for (int i = 0; i < 3; ++i) {
        Matrix solo = self_attention(batch.image(i), w);
        Matrix joint = out.image(i);
        for (size_t k = 0; k < solo.d.size(); ++k)
            CHECK(std::abs(solo.d[k] - joint.d[k]) < 1e-12);
    }
}

TEST_CASE("identical images give identical outputs at any rate") {
    std::mt19937_64 rng(2);
    FeatureBatch one = random_batch(rng, 1, 4, 3);
    FeatureBatch both(2, 4, 3);
    both.set_image(0, one.image(0));
    both.set_image(1, one.image(0));
    ProjectionWeights w = ProjectionWeights::seeded(3, 3);
    AttentionOutput out = consistent_self_attention(both, w, {1.0, 77, SamplePool::AllOtherImages});
    Matrix a = out.image(0), b = out.image(1);
    for (size_t k = 0; k < a.d.size(); ++k) CHECK(a.d[k] == doctest::Approx(b.d[k]).epsilon(1e-12));
}

TEST_CASE("2x2x2 full-rate fixture matches brute-force merged-set oracle") {
    std::mt19937_64 rng(12);
    FeatureBatch batch = random_batch(rng, 2, 2, 2);
    ProjectionWeights w = ProjectionWeights::seeded(2, 21);
    SamplingPolicy policy{1.0, 5, SamplePool::AllOtherImages};
    AttentionOutput got = consistent_self_attention(batch, w, policy);
    auto want = oracle::consistent_attention(to_oracle(batch), to_oracle(w.w_q), to_oracle(w.w_k),
                                             to_oracle(w.w_v), 1.0, 5, false);
    for (int i = 0; i < 2; ++i) CHECK(max_abs_diff(got.image(i), want[static_cast<size_t>(i)]) < 1e-9);
}

TEST_CASE("randomized oracle equivalence, row stochasticity, determinism") {
    std::mt19937_64 rng(20260809);
    for (int trial = 0; trial < 60; ++trial) {
        int b = 1 + static_cast<int>(rng() % 4);
        int n = 1 + static_cast<int>(rng() % 8);
        int c = 1 + static_cast<int>(rng() % 8);
        double rate = static_cast<double>(rng() % 5) / 4.0;
        uint64_t seed = rng();
        bool prior = (rng() & 1) != 0;
        SamplingPolicy policy{rate, seed, prior ? SamplePool::PriorImagesOnly : SamplePool::AllOtherImages};

        FeatureBatch batch = random_batch(rng, b, n, c);
        ProjectionWeights w = ProjectionWeights::seeded(c, rng());

        std::vector<AttentionDebug> debug;
        AttentionOutput got = consistent_self_attention(batch, w, policy, &debug);
        CHECK(got.batch == b);
        CHECK(got.tokens == n);
        CHECK(got.channels == c);

        auto want = oracle::consistent_attention(to_oracle(batch), to_oracle(w.w_q),
                                                 to_oracle(w.w_k), to_oracle(w.w_v), rate, seed, prior);
        for (int i = 0; i < b; ++i)
            CHECK(max_abs_diff(got.image(i), want[static_cast<size_t>(i)]) < 1e-9);

        for (const auto& dbg : debug)
            for (int r = 0; r < dbg.weights.rows; ++r) {
                double sum = 0.0;
                for (int j = 0; j < dbg.weights.cols; ++j) sum += dbg.weights.at(r, j);
                CHECK(std::abs(sum - 1.0) < 1e-9);
            }

        AttentionOutput again = consistent_self_attention(batch, w, policy);
        CHECK(again.d == got.d); // bit-identical
    }
}

TEST_CASE("weight sharing: project-then-concat equals concat-then-project") {
    std::mt19937_64 rng(88);
    FeatureBatch batch = random_batch(rng, 3, 4, 5);
    ProjectionWeights w = ProjectionWeights::seeded(5, 31);
    SamplingPolicy policy{0.75, 123, SamplePool::AllOtherImages};
    for (int i = 0; i < 3; ++i) {
        SampledTokens s = rand_sample(batch, i, policy);
        Matrix own = batch.image(i);
        Matrix merged = vstack(own, s.gather(batch));
        Matrix concat_then_project = matmul(merged, w.w_k);
        Matrix project_then_concat = vstack(matmul(own, w.w_k), matmul(s.gather(batch), w.w_k));
        REQUIRE(concat_then_project.d.size() == project_then_concat.d.size());
        for (size_t k = 0; k < concat_then_project.d.size(); ++k)
            CHECK(std::abs(concat_then_project.d[k] - project_then_concat.d[k]) < 1e-12);
    }
}

TEST_CASE("cross-image coupling appears exactly when rate > 0") {
    std::mt19937_64 rng(7);
    FeatureBatch batch = random_batch(rng, 2, 3, 3);
    ProjectionWeights w = ProjectionWeights::seeded(3, 17);

    FeatureBatch perturbed = batch;
    perturbed.at(1, 0, 0) += 0.5;

    SamplingPolicy off{0.0, 1, SamplePool::AllOtherImages};
    Matrix base_off = consistent_self_attention(batch, w, off).image(0);
    Matrix pert_off = consistent_self_attention(perturbed, w, off).image(0);
    CHECK(base_off.d == pert_off.d);

    SamplingPolicy on{1.0, 1, SamplePool::AllOtherImages};
    Matrix base_on = consistent_self_attention(batch, w, on).image(0);
    Matrix pert_on = consistent_self_attention(perturbed, w, on).image(0);
    double diff = 0.0;
    for (size_t k = 0; k < base_on.d.size(); ++k) diff += std::abs(base_on.d[k] - pert_on.d[k]);
    CHECK(diff > 1e-9);
}

TEST_CASE("optional output projection applies after the value blend") {
    std::mt19937_64 rng(15);
    FeatureBatch batch = random_batch(rng, 1, 3, 2);
    ProjectionWeights w = ProjectionWeights::seeded(2, 4);
    Matrix plain = self_attention(batch.image(0), w);

    ProjectionWeights with_id = w;
    with_id.w_o = Matrix(2, 2);
    with_id.w_o->at(0, 0) = 1.0;
    with_id.w_o->at(1, 1) = 1.0;
    CHECK(self_attention(batch.image(0), with_id).d == plain.d);

    ProjectionWeights doubled = w;
    doubled.w_o = Matrix(2, 2);
    doubled.w_o->at(0, 0) = 2.0;
    doubled.w_o->at(1, 1) = 2.0;
    Matrix twice = self_attention(batch.image(0), doubled);
    for (size_t k = 0; k < plain.d.size(); ++k)
        CHECK(twice.d[k] == doctest::Approx(2.0 * plain.d[k]).epsilon(1e-12));
}

TEST_CASE("npy round trip") {
    std::vector<double> data = {1.0, -2.5, 3.25, 0.0, 1e-9, 42.0};
    std::string path = "attention_dump_test.npy";
    write_npy(path, data, {2, 3});
    NpyArray back = read_npy(path);
    CHECK(back.shape == std::vector<size_t>{2, 3});
    CHECK(back.data == data);
    std::remove(path.c_str());
}
