#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pfp/errors.hpp"

namespace pfp {

/// How the `spread` buffer of a Gaussian tensor is to be read:
/// per-element variance, or second raw moment E[x^2] = mu^2 + sigma^2.
enum class MomentKind { MeanVariance, MeanSecondRawMoment };

inline const char* to_string(MomentKind k) {
    return k == MomentKind::MeanVariance ? "mv" : "me2";
}

inline MomentKind moment_kind_from_string(const std::string& s) {
    if (s == "mv") return MomentKind::MeanVariance;
    if (s == "me2") return MomentKind::MeanSecondRawMoment;
    throw FormatError("unknown moment kind '" + s + "'");
}

inline std::int64_t numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

/// Plain deterministic tensor (row-major f32). Used for network inputs and
/// for the sampling baseline's intermediate activations.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, float fill = 0.0f)
        : shape(std::move(s)), data(static_cast<std::size_t>(pfp::numel(shape)), fill) {}

    std::int64_t numel() const { return pfp::numel(shape); }
};

/// Batched tensor of independent Gaussian marginals. `mean` and `spread`
/// are row-major f32 buffers of identical length; `kind` selects the
/// spread interpretation. First shape dimension is the mini-batch.
///
/// Treated as immutable after construction; safe to share across threads.
struct GaussianTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> mean;
    std::vector<float> spread;
    MomentKind kind = MomentKind::MeanVariance;

    GaussianTensor() = default;
    GaussianTensor(std::vector<std::int64_t> s, MomentKind k)
        : shape(std::move(s)),
          mean(static_cast<std::size_t>(pfp::numel(shape)), 0.0f),
          spread(static_cast<std::size_t>(pfp::numel(shape)), 0.0f),
          kind(k) {}

    std::int64_t numel() const { return pfp::numel(shape); }
};

namespace detail {

// Floating-point slack for the E[x^2] >= mu^2 invariant.
inline double me2_slack(double mean) {
    const double m2 = mean * mean;
    return 1e-6 * std::max(1.0, m2);
}

}  // namespace detail

/// Throws InvariantViolation at the first element breaking the type invariants.
inline void assert_valid(const GaussianTensor& t) {
    const auto n = static_cast<std::size_t>(t.numel());
    if (t.mean.size() != n || t.spread.size() != n)
        throw InvariantViolation("buffer length does not match shape", 0, 0.0, 0.0);
    if (t.kind == MomentKind::MeanVariance) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!(t.spread[i] >= 0.0f))
                throw InvariantViolation("negative variance", i, t.mean[i], t.spread[i]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double m = t.mean[i];
            if (!(t.spread[i] >= m * m - detail::me2_slack(m)))
                throw InvariantViolation("second raw moment below mean^2", i, t.mean[i],
                                         t.spread[i]);
        }
    }
}

/// Moment-representation conversion. mv -> me2 is E[x^2] = mu^2 + sigma^2;
/// me2 -> mv clamps sigma^2 = E[x^2] - mu^2 at zero (cancellation near
/// sigma^2 ~ 0 is expected, not an error). Identity when target == kind.
inline GaussianTensor convert(const GaussianTensor& t, MomentKind target) {
    if (target == t.kind) return t;
    GaussianTensor out = t;
    out.kind = target;
    const std::size_t n = t.mean.size();
    if (target == MomentKind::MeanSecondRawMoment) {
        for (std::size_t i = 0; i < n; ++i) {
            const double m = t.mean[i];
            out.spread[i] = static_cast<float>(m * m + static_cast<double>(t.spread[i]));
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double m = t.mean[i];
            out.spread[i] =
                static_cast<float>(std::max(0.0, static_cast<double>(t.spread[i]) - m * m));
        }
    }
    return out;
}

}  // namespace pfp
