#include <catch_amalgamated.hpp>

#include <random>

#include "pfp/kernels.hpp"
#include "test_util.hpp"

using pfp::GaussianTensor;
using pfp::GaussianWeights;
using pfp::MomentKind;
namespace kn = pfp::kernels;

namespace {

struct Problem {
    GaussianTensor x;
    GaussianWeights w;
};

Problem random_problem(std::int64_t m, std::int64_t k, std::int64_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Problem p;
    p.x = GaussianTensor({m, k}, MomentKind::MeanSecondRawMoment);
    for (std::size_t i = 0; i < p.x.mean.size(); ++i) {
        const double mu = u01(gen);
        p.x.mean[i] = static_cast<float>(mu);
        p.x.spread[i] = static_cast<float>(mu * mu + u01(gen));
    }
    p.w.shape = {n, k};
    p.w.kind = MomentKind::MeanSecondRawMoment;
    p.w.mean.resize(static_cast<std::size_t>(n * k));
    p.w.spread.resize(p.w.mean.size());
    for (std::size_t i = 0; i < p.w.mean.size(); ++i) {
        const double mu = 2.0 * u01(gen) - 1.0;
        p.w.mean[i] = static_cast<float>(mu);
        p.w.spread[i] = static_cast<float>(mu * mu + 0.25 * u01(gen));
    }
    if (seed % 2) {
        std::vector<float> bm(static_cast<std::size_t>(n)), bv(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < bm.size(); ++i) {
            bm[i] = static_cast<float>(u01(gen) - 0.5);
            bv[i] = static_cast<float>(0.1 * u01(gen));
        }
        p.w.bias = pfp::BiasMode::probabilistic(bm, bv);
    }
    return p;
}

void check_matches_reference(const Problem& p, const kn::KernelConfig& cfg, double rel) {
    const auto ref = pfp::dense(p.x, p.w, MomentKind::MeanVariance);
    const auto got = kn::dense_kernel(p.x, p.w, cfg, MomentKind::MeanVariance);
    REQUIRE(got.shape == ref.shape);
    for (std::size_t i = 0; i < ref.mean.size(); ++i) {
        CAPTURE(cfg.describe(), i, ref.mean[i], got.mean[i], ref.spread[i], got.spread[i]);
        REQUIRE(testutil::close_rel(got.mean[i], ref.mean[i], rel));
        REQUIRE(testutil::close_rel(got.spread[i], ref.spread[i], rel));
    }
}

}  // namespace

TEST_CASE("naive kernel config reproduces the reference dense") {
    const auto p = random_problem(10, 64, 20, 1);
    check_matches_reference(p, kn::KernelConfig::naive(), 1e-6);
}

TEST_CASE("every schedule in the menu agrees with the reference within 1e-5") {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> dim(1, 96);
    for (int shape_trial = 0; shape_trial < 8; ++shape_trial) {
        const std::int64_t m = dim(gen) % 12 + 1, k = dim(gen), n = dim(gen);
        const auto p = random_problem(m, k, n, static_cast<std::uint64_t>(shape_trial));
        for (std::uint64_t t = 0; t < 6; ++t) {
            const auto cfg = kn::detail::random_config(900 + shape_trial, t, m, n, k, 4);
            check_matches_reference(p, cfg, 1e-5);
        }
    }
}

TEST_CASE("all six loop orders and tiling agree with the reference") {
    const auto p = random_problem(7, 70, 13, 3);
    for (auto order : {kn::LoopOrder::MNK, kn::LoopOrder::MKN, kn::LoopOrder::NMK,
                       kn::LoopOrder::NKM, kn::LoopOrder::KMN, kn::LoopOrder::KNM}) {
        kn::KernelConfig cfg;
        cfg.loop_order = order;
        cfg.block_m = 4;
        cfg.block_n = 8;
        cfg.block_k = 16;
        cfg.unroll = 2;
        cfg.vector_width_hint = 4;
        check_matches_reference(p, cfg, 1e-5);
    }
}

TEST_CASE("thread count does not change kernel results bit for bit") {
    const auto p = random_problem(12, 100, 24, 5);
    kn::KernelConfig cfg;
    cfg.block_m = 8;
    cfg.block_n = 8;
    cfg.unroll = 4;
    cfg.vector_width_hint = 4;

    kn::KernelConfig c1 = cfg, c2 = cfg, c4 = cfg;
    c1.threads = 1;
    c2.threads = 2;
    c4.threads = 4;
    const auto r1 = kn::dense_kernel(p.x, p.w, c1);
    const auto r2 = kn::dense_kernel(p.x, p.w, c2);
    const auto r4 = kn::dense_kernel(p.x, p.w, c4);
    CHECK(r1.mean == r2.mean);
    CHECK(r1.spread == r2.spread);
    CHECK(r1.mean == r4.mean);
    CHECK(r1.spread == r4.spread);
}

TEST_CASE("invalid configs are rejected before execution") {
    const auto p = random_problem(4, 16, 4, 2);
    kn::KernelConfig bad;
    bad.unroll = 3;
    CHECK_THROWS_AS(kn::dense_kernel(p.x, p.w, bad), pfp::InvalidConfig);
    bad = {};
    bad.block_k = 512;  // larger than k=16
    CHECK_THROWS_AS(kn::dense_kernel(p.x, p.w, bad), pfp::InvalidConfig);
    bad = {};
    bad.threads = 0;
    CHECK_THROWS_AS(kn::dense_kernel(p.x, p.w, bad), pfp::InvalidConfig);
    bad = {};
    bad.vector_width_hint = 2;
    CHECK_THROWS_AS(kn::dense_kernel(p.x, p.w, bad), pfp::InvalidConfig);
    CHECK_THROWS_AS(kn::tune_dense(4, 16, 4, 0, 1), pfp::InvalidConfig);
    CHECK_THROWS_AS(kn::tune_dense(4, 16, 4, 1, 1, 3), pfp::InvalidConfig);
}

TEST_CASE("tuner: fixed seed is deterministic, naive is the baseline") {
    const auto a = kn::tune_dense(4, 48, 8, 3, 42, 5, 2);
    const auto b = kn::tune_dense(4, 48, 8, 3, 42, 5, 2);
    REQUIRE(a.trials.size() == 4);  // naive + 3 candidates
    for (std::size_t i = 0; i < a.trials.size(); ++i)
        CHECK(a.trials[i].config.describe() == b.trials[i].config.describe());
    CHECK(a.naive_ns == a.trials[0].median_ns);
    CHECK(a.best_ns <= a.naive_ns);
    CHECK(a.speedup >= 1.0);
}

TEST_CASE("tuner: best-so-far is monotone in the budget for a fixed seed") {
    const auto small = kn::tune_dense(4, 48, 8, 2, 7, 5, 2);
    const auto large = kn::tune_dense(4, 48, 8, 6, 7, 5, 2);
    // Candidate sequence is a prefix: the bigger budget can only improve.
    for (std::size_t i = 0; i < small.trials.size(); ++i)
        CHECK(small.trials[i].config.describe() == large.trials[i].config.describe());
    CHECK(large.best_ns <= small.best_ns * 1.5);  // timing noise guard
    CHECK(large.best_ns <= large.naive_ns);
}

TEST_CASE("kernel rejects wrong representations") {
    auto p = random_problem(2, 8, 2, 11);
    const auto x_mv = pfp::convert(p.x, MomentKind::MeanVariance);
    CHECK_THROWS_AS(kn::dense_kernel(x_mv, p.w, kn::KernelConfig::naive()),
                    pfp::RepresentationMismatch);
}
