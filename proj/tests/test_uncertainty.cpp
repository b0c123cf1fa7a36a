#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "pfp/uncertainty.hpp"
#include "test_util.hpp"

using pfp::LogitDistribution;
using pfp::mc::SampleBatch;

namespace {

SampleBatch batch_from(std::vector<float> logits, std::int64_t s, std::int64_t n,
                       std::int64_t k) {
    SampleBatch b;
    b.samples = s;
    b.items = n;
    b.classes = k;
    b.logits = std::move(logits);
    return b;
}

SampleBatch random_batch(std::mt19937_64& gen, std::int64_t s, std::int64_t n, std::int64_t k,
                         double scale = 3.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<float> l(static_cast<std::size_t>(s * n * k));
    for (auto& v : l) v = static_cast<float>(u(gen));
    return batch_from(std::move(l), s, n, k);
}

// Deliberately naive reference: separate passes, no shared accumulators.
struct SlowReference {
    std::vector<double> total, aleatoric, mi;
    explicit SlowReference(const SampleBatch& b) {
        for (std::int64_t n = 0; n < b.items; ++n) {
            std::vector<double> pbar(static_cast<std::size_t>(b.classes), 0.0);
            for (std::int64_t s = 0; s < b.samples; ++s) {
                std::vector<float> row(static_cast<std::size_t>(b.classes));
                for (std::int64_t c = 0; c < b.classes; ++c) row[c] = b.at(s, n, c);
                const auto p = pfp::uq::softmax(row);
                for (std::int64_t c = 0; c < b.classes; ++c) pbar[c] += p[c] / b.samples;
            }
            double h_total = 0.0;
            for (double p : pbar)
                if (p > 0) h_total -= p * std::log(p);

            double h_mean = 0.0;
            for (std::int64_t s = 0; s < b.samples; ++s) {
                std::vector<float> row(static_cast<std::size_t>(b.classes));
                for (std::int64_t c = 0; c < b.classes; ++c) row[c] = b.at(s, n, c);
                const auto p = pfp::uq::softmax(row);
                for (double pv : p)
                    if (pv > 0) h_mean -= pv * std::log(pv) / b.samples;
            }
            total.push_back(h_total);
            aleatoric.push_back(h_mean);
            mi.push_back(h_total - h_mean);
        }
    }
};

}  // namespace

TEST_CASE("softmax basics") {
    const auto even = pfp::uq::softmax({0.0f, 0.0f});
    CHECK(even[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(even[1] == Catch::Approx(0.5).margin(1e-12));

    const auto a = pfp::uq::softmax({0.3f, -1.2f, 2.0f});
    const auto b = pfp::uq::softmax({0.3f + 7.5f, -1.2f + 7.5f, 2.0f + 7.5f});
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::fabs(a[i] - b[i]) <= 1e-7);
        sum += a[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-6);

    const auto hot = pfp::uq::softmax({1000.0f, 0.0f});
    CHECK(hot[0] == 1.0);
    CHECK(hot[1] == 0.0);
}

TEST_CASE("shannon entropy of agreeing one-hot samples is zero") {
    // 4 samples, all strongly selecting class 0 of 3.
    std::vector<float> l;
    for (int s = 0; s < 4; ++s) {
        l.push_back(1000.0f);
        l.push_back(0.0f);
        l.push_back(0.0f);
    }
    const auto h = pfp::uq::shannon_entropy(batch_from(std::move(l), 4, 1, 3));
    CHECK(h[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("uniformly spread one-hot samples reach ln K total and MI") {
    const std::int64_t k = 10;
    std::vector<float> l(static_cast<std::size_t>(k * k), 0.0f);
    for (std::int64_t s = 0; s < k; ++s) l[static_cast<std::size_t>(s * k + s)] = 1000.0f;
    const auto b = batch_from(std::move(l), k, 1, k);
    const auto r = pfp::uq::uncertainty_report(b);
    CHECK(r.total_entropy[0] == Catch::Approx(std::log(10.0)).margin(1e-9));
    CHECK(r.softmax_entropy[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(r.mutual_information[0] == Catch::Approx(std::log(10.0)).margin(1e-9));
}

TEST_CASE("softmax entropy of uniform samples is ln K; of one-hot samples is zero") {
    std::vector<float> uniform(5 * 4, 0.25f);
    const auto se_u = pfp::uq::softmax_entropy(batch_from(std::move(uniform), 5, 1, 4));
    CHECK(se_u[0] == Catch::Approx(std::log(4.0)).margin(1e-9));

    std::vector<float> hot;
    for (int s = 0; s < 6; ++s)
        for (int c = 0; c < 4; ++c) hot.push_back(c == (s % 4) ? 1000.0f : 0.0f);
    const auto se_h = pfp::uq::softmax_entropy(batch_from(std::move(hot), 6, 1, 4));
    CHECK(se_h[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("entropies match a slow reference implementation within 1e-9") {
    std::mt19937_64 gen(14142);
    const auto b = random_batch(gen, 40, 5, 7);
    const auto r = pfp::uq::uncertainty_report(b);
    const SlowReference ref(b);
    for (std::int64_t n = 0; n < 5; ++n) {
        CHECK(std::fabs(r.total_entropy[n] - ref.total[n]) <= 1e-9);
        CHECK(std::fabs(r.softmax_entropy[n] - ref.aleatoric[n]) <= 1e-9);
        CHECK(std::fabs(r.mutual_information[n] - ref.mi[n]) <= 1e-9);
    }
}

TEST_CASE("Jensen: softmax entropy never exceeds shannon entropy") {
    std::mt19937_64 gen(161803);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto b = random_batch(gen, 8, 1, 5, 4.0);
        const auto r = pfp::uq::uncertainty_report(b);
        CHECK(r.softmax_entropy[0] <= r.total_entropy[0] + 1e-9);
    }
}

TEST_CASE("decomposition identity and bounds on random batches") {
    std::mt19937_64 gen(271828);
    for (int trial = 0; trial < 50; ++trial) {
        const auto b = random_batch(gen, 16, 3, 6);
        const auto r = pfp::uq::uncertainty_report(b);
        for (std::int64_t n = 0; n < 3; ++n) {
            CHECK(std::fabs(r.total_entropy[n] -
                            (r.softmax_entropy[n] + r.mutual_information[n])) <= 1e-12);
            CHECK(r.mutual_information[n] >= 0.0);
            CHECK(r.total_entropy[n] <= std::log(6.0) + 1e-6);
        }
    }
}

TEST_CASE("MI of identical samples is zero") {
    std::vector<float> l;
    for (int s = 0; s < 12; ++s) {
        l.push_back(0.3f);
        l.push_back(-0.7f);
        l.push_back(1.9f);
    }
    const auto mi = pfp::uq::mutual_information(batch_from(std::move(l), 12, 1, 3));
    CHECK(mi[0] <= 1e-9);
}

TEST_CASE("logit_sample: zero variance copies the means; draws are seeded") {
    LogitDistribution d;
    d.items = 1;
    d.classes = 3;
    d.mean = {1.0f, -2.0f, 0.5f};
    d.variance = {0.0f, 0.0f, 0.0f};
    const auto b = pfp::uq::logit_sample(d, 7, 5);
    for (std::int64_t s = 0; s < 7; ++s)
        for (std::int64_t c = 0; c < 3; ++c) CHECK(b.at(s, 0, c) == d.mean[c]);

    d.variance = {0.5f, 1.5f, 2.5f};
    const auto b1 = pfp::uq::logit_sample(d, 50, 11);
    const auto b2 = pfp::uq::logit_sample(d, 50, 11);
    CHECK(b1.logits == b2.logits);
    const auto b3 = pfp::uq::logit_sample(d, 50, 12);
    CHECK(b1.logits != b3.logits);
}

TEST_CASE("logit_sample moments obey the law of large numbers") {
    LogitDistribution d;
    d.items = 1;
    d.classes = 2;
    d.mean = {2.0f, -1.0f};
    d.variance = {4.0f, 0.25f};
    const std::int64_t s_count = 100'000;
    const auto b = pfp::uq::logit_sample(d, s_count, 77);
    for (std::int64_t c = 0; c < 2; ++c) {
        std::vector<double> xs(static_cast<std::size_t>(s_count));
        for (std::int64_t s = 0; s < s_count; ++s) xs[static_cast<std::size_t>(s)] =
            b.at(s, 0, c);
        const auto st = testutil::sample_stats(xs);
        CHECK(testutil::within_se(d.mean[c], st.mean, st.se_mean));
        CHECK(testutil::within_se(d.variance[c], st.variance, st.se_variance));
    }
}

TEST_CASE("auroc trivial cases are exact") {
    CHECK(pfp::uq::auroc({0.0f, 0.0f}, {1.0f, 1.0f}) == 1.0);
    CHECK(pfp::uq::auroc({0.3f, 0.7f, 0.5f}, {0.3f, 0.7f, 0.5f}) == 0.5);
    CHECK_THROWS_AS(pfp::uq::auroc({}, {1.0f}), pfp::EmptyClass);
    CHECK_THROWS_AS(pfp::uq::auroc({1.0f}, {}), pfp::EmptyClass);
}

TEST_CASE("auroc equals the trapezoidal ROC oracle on random score sets") {
    std::mt19937_64 gen(5551212);
    std::uniform_int_distribution<int> size_d(1, 40);
    std::uniform_int_distribution<int> grid(0, 9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const bool with_ties = trial % 2 == 0;
        std::vector<float> in(static_cast<std::size_t>(size_d(gen)));
        std::vector<float> out(static_cast<std::size_t>(size_d(gen)));
        for (auto& v : in)
            v = with_ties ? static_cast<float>(grid(gen)) : static_cast<float>(u(gen));
        for (auto& v : out)
            v = with_ties ? static_cast<float>(grid(gen) + 2) : static_cast<float>(u(gen) + 0.2);
        const double fast = pfp::uq::auroc(in, out);
        const double slow = testutil::trapezoid_auroc(in, out);
        CHECK(std::fabs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("auroc symmetry and monotone-transform invariance") {
    std::mt19937_64 gen(90125);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<float> a(25), b(30);
    for (auto& v : a) v = static_cast<float>(u(gen));
    for (auto& v : b) v = static_cast<float>(u(gen) + 0.1);

    CHECK(pfp::uq::auroc(a, b) + pfp::uq::auroc(b, a) == Catch::Approx(1.0).margin(1e-12));

    auto squash = [](std::vector<float> v) {
        for (auto& x : v) x = std::tanh(3.0f * x) + 5.0f;
        return v;
    };
    CHECK(pfp::uq::auroc(a, b) ==
          Catch::Approx(pfp::uq::auroc(squash(a), squash(b))).margin(1e-12));
}

TEST_CASE("mi_gap trivial cases report zero gap") {
    // Single class: every sample trivially selects the same class.
    const auto one_class = pfp::uq::mi_gap_experiment(1, 16, 64, 9.0, 3);
    CHECK(one_class.mi_sampled <= 1e-9);
    CHECK(one_class.relative_underestimate == 0.0);

    // Zero magnitude: all samples identical (uniform softmax).
    const auto flat = pfp::uq::mi_gap_experiment(10, 16, 64, 0.0, 3);
    CHECK(flat.mi_sampled <= 1e-9);
    CHECK(flat.relative_underestimate == 0.0);
}

TEST_CASE("mi_gap large-lambda sampled MI approaches ln K") {
    const auto r = pfp::uq::mi_gap_experiment(10, 64, 2048, 50.0, 17);
    CHECK(r.mi_sampled == Catch::Approx(std::log(10.0)).epsilon(0.02));
}

TEST_CASE("mi_gap default-lambda quick check lands near the paper figure") {
    const auto r = pfp::uq::mi_gap_experiment(10, 128, 512, pfp::uq::kMiGapDefaultLambda, 21);
    CHECK(r.relative_underestimate > 0.30);
    CHECK(r.relative_underestimate < 0.60);
}

TEST_CASE("MI needs more samples than softmax entropy to stabilize") {
    LogitDistribution d;
    d.items = 4;
    d.classes = 10;
    d.mean.resize(40);
    d.variance.resize(40);
    for (std::size_t i = 0; i < 40; ++i) {
        d.mean[i] = static_cast<float>(pfp::rng::normal_at(640, 0, 0, i) * 2.0);
        d.variance[i] = static_cast<float>(pfp::rng::uniform_at(640, 0, 1, i, 0.5, 4.0));
    }

    double se_gap = 0.0, mi_gap = 0.0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        const auto small = pfp::uq::uncertainty_report(
            pfp::uq::logit_sample(d, 5, 1000 + static_cast<std::uint64_t>(t)));
        const auto large = pfp::uq::uncertainty_report(
            pfp::uq::logit_sample(d, 500, 5000 + static_cast<std::uint64_t>(t)));
        for (std::int64_t n = 0; n < 4; ++n) {
            se_gap += std::fabs(small.softmax_entropy[n] - large.softmax_entropy[n]);
            mi_gap += std::fabs(small.mutual_information[n] - large.mutual_information[n]);
        }
    }
    CHECK(se_gap / trials < mi_gap / trials);
}
