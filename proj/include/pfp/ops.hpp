#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfp/errors.hpp"
#include "pfp/math.hpp"
#include "pfp/tensor.hpp"

namespace pfp {

enum class BiasKind { None, Deterministic, Probabilistic };

/// Additive bias of a compute layer. Deterministic carries a mean vector
/// only; Probabilistic adds a per-output variance.
struct BiasMode {
    BiasKind kind = BiasKind::None;
    std::vector<float> mean;
    std::vector<float> variance;

    static BiasMode none() { return {}; }
    static BiasMode deterministic(std::vector<float> m) {
        BiasMode b;
        b.kind = BiasKind::Deterministic;
        b.mean = std::move(m);
        return b;
    }
    static BiasMode probabilistic(std::vector<float> m, std::vector<float> v) {
        BiasMode b;
        b.kind = BiasKind::Probabilistic;
        b.mean = std::move(m);
        b.variance = std::move(v);
        return b;
    }
};

/// Gaussian layer weights: dense [out, in], conv [out_ch, in_ch, kH, kW].
/// Spread interpretation follows `kind`; first-layer weights must be mv.
struct GaussianWeights {
    std::vector<std::int64_t> shape;
    std::vector<float> mean;
    std::vector<float> spread;
    MomentKind kind = MomentKind::MeanVariance;
    BiasMode bias;

    std::int64_t numel() const { return pfp::numel(shape); }
    std::int64_t out_dim() const { return shape.empty() ? 0 : shape[0]; }
};

inline void assert_valid(const GaussianWeights& w) {
    const auto n = static_cast<std::size_t>(w.numel());
    if (w.mean.size() != n || w.spread.size() != n)
        throw InvariantViolation("weight buffer length does not match shape", 0, 0.0, 0.0);
    if (w.kind == MomentKind::MeanVariance) {
        for (std::size_t i = 0; i < n; ++i)
            if (!(w.spread[i] >= 0.0f))
                throw InvariantViolation("negative weight variance", i, w.mean[i], w.spread[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double m = w.mean[i];
            if (!(w.spread[i] >= m * m - detail::me2_slack(m)))
                throw InvariantViolation("weight second raw moment below mean^2", i, w.mean[i],
                                         w.spread[i]);
        }
    }
    if (w.bias.kind != BiasKind::None) {
        if (static_cast<std::int64_t>(w.bias.mean.size()) != w.out_dim())
            throw InvariantViolation("bias mean length != output width", 0, 0.0, 0.0);
        if (w.bias.kind == BiasKind::Probabilistic) {
            if (w.bias.variance.size() != w.bias.mean.size())
                throw InvariantViolation("bias variance length != output width", 0, 0.0, 0.0);
            for (std::size_t i = 0; i < w.bias.variance.size(); ++i)
                if (!(w.bias.variance[i] >= 0.0f))
                    throw InvariantViolation("negative bias variance", i, w.bias.mean[i],
                                             w.bias.variance[i]);
        }
    }
}

/// Weight view with spread as variance, whatever the stored kind.
inline GaussianWeights weights_as_mv(const GaussianWeights& w) {
    if (w.kind == MomentKind::MeanVariance) return w;
    GaussianWeights out = w;
    out.kind = MomentKind::MeanVariance;
    for (std::size_t i = 0; i < w.mean.size(); ++i) {
        const double m = w.mean[i];
        out.spread[i] =
            static_cast<float>(std::max(0.0, static_cast<double>(w.spread[i]) - m * m));
    }
    return out;
}

namespace detail {

inline void bias_mean_var(const BiasMode& b, std::int64_t i, double& m, double& v) {
    if (b.kind == BiasKind::None) return;
    m += b.mean[static_cast<std::size_t>(i)];
    if (b.kind == BiasKind::Probabilistic) v += b.variance[static_cast<std::size_t>(i)];
}

inline void store_moments(double m, double v, MomentKind out_kind, float& mean_out,
                          float& spread_out) {
    mean_out = static_cast<float>(m);
    if (out_kind == MomentKind::MeanVariance)
        spread_out = static_cast<float>(std::max(0.0, v));
    else
        spread_out = static_cast<float>(m * m + std::max(0.0, v));
}

inline void check_dense_shapes(const std::vector<std::int64_t>& xshape,
                               const GaussianWeights& w) {
    if (xshape.size() != 2) throw ShapeMismatch("dense input must be [N, d_in]");
    if (w.shape.size() != 2) throw ShapeMismatch("dense weights must be [d_out, d_in]");
    if (xshape[1] != w.shape[1])
        throw ShapeMismatch("dense d_in mismatch: input " + std::to_string(xshape[1]) +
                            " vs weights " + std::to_string(w.shape[1]));
}

}  // namespace detail

/// Joint dense operator on second raw moments. Mean and variance come out
/// of one fused loop nest; the per-term product mu_w*mu_x feeds both.
///
///   mean_i = sum_j mu_w[i,j] * mu_x[j]
///   var_i  = sum_j E[w^2][i,j] * E[x^2][j] - (mu_w[i,j] * mu_x[j])^2
inline GaussianTensor dense(const GaussianTensor& x, const GaussianWeights& w,
                            MomentKind out_kind) {
    if (x.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense expects me2 activations");
    if (w.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense expects me2 weights");
    detail::check_dense_shapes(x.shape, w);

    const std::int64_t batch = x.shape[0], d_in = x.shape[1], d_out = w.shape[0];
    GaussianTensor out({batch, d_out}, out_kind);
    for (std::int64_t n = 0; n < batch; ++n) {
        const float* xm = x.mean.data() + n * d_in;
        const float* xe = x.spread.data() + n * d_in;
        for (std::int64_t i = 0; i < d_out; ++i) {
            const float* wm = w.mean.data() + i * d_in;
            const float* we = w.spread.data() + i * d_in;
            double m = 0.0, v = 0.0;
            for (std::int64_t j = 0; j < d_in; ++j) {
                const double p = static_cast<double>(wm[j]) * xm[j];
                m += p;
                v += static_cast<double>(we[j]) * xe[j] - p * p;
            }
            detail::bias_mean_var(w.bias, i, m, v);
            detail::store_moments(m, v, out_kind, out.mean[n * d_out + i],
                                  out.spread[n * d_out + i]);
        }
    }
    return out;
}

/// Dense on the mean/variance representation; same moments as `dense`.
///
///   var_i = sum_j sw2*mx^2 + mw^2*sx2 + sw2*sx2
inline GaussianTensor dense_mv(const GaussianTensor& x, const GaussianWeights& w,
                               MomentKind out_kind) {
    if (x.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("dense_mv expects mv activations");
    if (w.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("dense_mv expects mv weights");
    detail::check_dense_shapes(x.shape, w);

    const std::int64_t batch = x.shape[0], d_in = x.shape[1], d_out = w.shape[0];
    GaussianTensor out({batch, d_out}, out_kind);
    for (std::int64_t n = 0; n < batch; ++n) {
        const float* xm = x.mean.data() + n * d_in;
        const float* xv = x.spread.data() + n * d_in;
        for (std::int64_t i = 0; i < d_out; ++i) {
            const float* wm = w.mean.data() + i * d_in;
            const float* wv = w.spread.data() + i * d_in;
            double m = 0.0, v = 0.0;
            for (std::int64_t j = 0; j < d_in; ++j) {
                const double mw = wm[j], mx = xm[j], sw = wv[j], sx = xv[j];
                m += mw * mx;
                v += sw * mx * mx + mw * mw * sx + sw * sx;
            }
            detail::bias_mean_var(w.bias, i, m, v);
            detail::store_moments(m, v, out_kind, out.mean[n * d_out + i],
                                  out.spread[n * d_out + i]);
        }
    }
    return out;
}

/// First-layer dense: deterministic input, so activation variance is
/// unavailable and the variance reduces to sum_j sw2[i,j] * x[j]^2.
/// Weight spreads must be stored as variances.
inline GaussianTensor dense_first(const Tensor& x, const GaussianWeights& w,
                                  MomentKind out_kind) {
    if (w.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("dense_first requires mv weights");
    detail::check_dense_shapes(x.shape, w);

    const std::int64_t batch = x.shape[0], d_in = x.shape[1], d_out = w.shape[0];
    GaussianTensor out({batch, d_out}, out_kind);
    for (std::int64_t n = 0; n < batch; ++n) {
        const float* xd = x.data.data() + n * d_in;
        for (std::int64_t i = 0; i < d_out; ++i) {
            const float* wm = w.mean.data() + i * d_in;
            const float* wv = w.spread.data() + i * d_in;
            double m = 0.0, v = 0.0;
            for (std::int64_t j = 0; j < d_in; ++j) {
                const double xj = xd[j];
                m += static_cast<double>(wm[j]) * xj;
                v += static_cast<double>(wv[j]) * xj * xj;
            }
            detail::bias_mean_var(w.bias, i, m, v);
            detail::store_moments(m, v, out_kind, out.mean[n * d_out + i],
                                  out.spread[n * d_out + i]);
        }
    }
    return out;
}

/// Split-operator reference pair: the mean path alone. Exists to reproduce
/// the joint-vs-split comparison; `dense` is the production operator.
inline Tensor dense_split_mean(const GaussianTensor& x, const GaussianWeights& w) {
    if (x.kind != MomentKind::MeanSecondRawMoment || w.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense_split_mean expects me2 inputs and weights");
    detail::check_dense_shapes(x.shape, w);
    const std::int64_t batch = x.shape[0], d_in = x.shape[1], d_out = w.shape[0];
    Tensor out({batch, d_out});
    for (std::int64_t n = 0; n < batch; ++n) {
        const float* xm = x.mean.data() + n * d_in;
        for (std::int64_t i = 0; i < d_out; ++i) {
            const float* wm = w.mean.data() + i * d_in;
            double m = 0.0;
            for (std::int64_t j = 0; j < d_in; ++j) m += static_cast<double>(wm[j]) * xm[j];
            if (w.bias.kind != BiasKind::None) m += w.bias.mean[static_cast<std::size_t>(i)];
            out.data[n * d_out + i] = static_cast<float>(m);
        }
    }
    return out;
}

/// Split-operator reference pair: the variance path alone. Recomputes the
/// mu_w*mu_x products the joint operator shares with the mean path.
inline Tensor dense_split_var(const GaussianTensor& x, const GaussianWeights& w) {
    if (x.kind != MomentKind::MeanSecondRawMoment || w.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense_split_var expects me2 inputs and weights");
    detail::check_dense_shapes(x.shape, w);
    const std::int64_t batch = x.shape[0], d_in = x.shape[1], d_out = w.shape[0];
    Tensor out({batch, d_out});
    for (std::int64_t n = 0; n < batch; ++n) {
        const float* xm = x.mean.data() + n * d_in;
        const float* xe = x.spread.data() + n * d_in;
        for (std::int64_t i = 0; i < d_out; ++i) {
            const float* wm = w.mean.data() + i * d_in;
            const float* we = w.spread.data() + i * d_in;
            double v = 0.0;
            for (std::int64_t j = 0; j < d_in; ++j) {
                const double p = static_cast<double>(wm[j]) * xm[j];
                v += static_cast<double>(we[j]) * xe[j] - p * p;
            }
            if (w.bias.kind == BiasKind::Probabilistic)
                v += w.bias.variance[static_cast<std::size_t>(i)];
            out.data[n * d_out + i] = static_cast<float>(std::max(0.0, v));
        }
    }
    return out;
}

/// Assembles the split pair into the same result shape as `dense`.
inline GaussianTensor dense_split(const GaussianTensor& x, const GaussianWeights& w,
                                  MomentKind out_kind) {
    const Tensor m = dense_split_mean(x, w);
    const Tensor v = dense_split_var(x, w);
    GaussianTensor out(m.shape, out_kind);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        detail::store_moments(m.data[i], v.data[i], out_kind, out.mean[i], out.spread[i]);
    return out;
}

namespace detail {

struct ConvDims {
    std::int64_t batch, in_ch, in_h, in_w;
    std::int64_t out_ch, k_h, k_w;
    std::int64_t out_h, out_w;
};

inline ConvDims check_conv_shapes(const std::vector<std::int64_t>& xshape,
                                  const GaussianWeights& w, int stride, int padding) {
    if (xshape.size() != 4) throw ShapeMismatch("conv2d input must be [N, C, H, W]");
    if (w.shape.size() != 4) throw ShapeMismatch("conv2d weights must be [O, C, kH, kW]");
    if (xshape[1] != w.shape[1]) throw ShapeMismatch("conv2d channel mismatch");
    if (stride < 1 || padding < 0) throw ShapeMismatch("unsupported stride/padding");
    ConvDims d;
    d.batch = xshape[0];
    d.in_ch = xshape[1];
    d.in_h = xshape[2];
    d.in_w = xshape[3];
    d.out_ch = w.shape[0];
    d.k_h = w.shape[2];
    d.k_w = w.shape[3];
    d.out_h = (d.in_h + 2 * padding - d.k_h) / stride + 1;
    d.out_w = (d.in_w + 2 * padding - d.k_w) / stride + 1;
    if (d.out_h < 1 || d.out_w < 1) throw ShapeMismatch("conv2d kernel larger than padded input");
    return d;
}

// Shared sliding-window loop; Term folds one (weight, input) element pair.
// Padded positions are deterministic zeros and contribute nothing.
template <typename Term>
inline void conv_accumulate(const ConvDims& d, int stride, int padding, std::int64_t n,
                            std::int64_t oh, std::int64_t ow, std::int64_t o, Term&& term) {
    for (std::int64_t c = 0; c < d.in_ch; ++c) {
        for (std::int64_t kh = 0; kh < d.k_h; ++kh) {
            const std::int64_t ih = oh * stride + kh - padding;
            if (ih < 0 || ih >= d.in_h) continue;
            for (std::int64_t kw = 0; kw < d.k_w; ++kw) {
                const std::int64_t iw = ow * stride + kw - padding;
                if (iw < 0 || iw >= d.in_w) continue;
                const std::int64_t xi = ((n * d.in_ch + c) * d.in_h + ih) * d.in_w + iw;
                const std::int64_t wi = ((o * d.in_ch + c) * d.k_h + kh) * d.k_w + kw;
                term(xi, wi);
            }
        }
    }
}

}  // namespace detail

/// Joint conv2d on second raw moments: the dense moment equations applied
/// per sliding window (NCHW activations, OIHW weights, symmetric zero padding).
inline GaussianTensor conv2d(const GaussianTensor& x, const GaussianWeights& w, int stride,
                             int padding, MomentKind out_kind) {
    if (x.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("conv2d expects me2 activations");
    if (w.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("conv2d expects me2 weights");
    const auto d = detail::check_conv_shapes(x.shape, w, stride, padding);

    GaussianTensor out({d.batch, d.out_ch, d.out_h, d.out_w}, out_kind);
    for (std::int64_t n = 0; n < d.batch; ++n)
        for (std::int64_t o = 0; o < d.out_ch; ++o)
            for (std::int64_t oh = 0; oh < d.out_h; ++oh)
                for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                    double m = 0.0, v = 0.0;
                    detail::conv_accumulate(d, stride, padding, n, oh, ow, o,
                                            [&](std::int64_t xi, std::int64_t wi) {
                                                const double p =
                                                    static_cast<double>(w.mean[wi]) * x.mean[xi];
                                                m += p;
                                                v += static_cast<double>(w.spread[wi]) *
                                                         x.spread[xi] -
                                                     p * p;
                                            });
                    detail::bias_mean_var(w.bias, o, m, v);
                    const std::int64_t oi = ((n * d.out_ch + o) * d.out_h + oh) * d.out_w + ow;
                    detail::store_moments(m, v, out_kind, out.mean[oi], out.spread[oi]);
                }
    return out;
}

/// First-layer conv2d on a deterministic input; weight spreads must be variances.
inline GaussianTensor conv2d_first(const Tensor& x, const GaussianWeights& w, int stride,
                                   int padding, MomentKind out_kind) {
    if (w.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("conv2d_first requires mv weights");
    const auto d = detail::check_conv_shapes(x.shape, w, stride, padding);

    GaussianTensor out({d.batch, d.out_ch, d.out_h, d.out_w}, out_kind);
    for (std::int64_t n = 0; n < d.batch; ++n)
        for (std::int64_t o = 0; o < d.out_ch; ++o)
            for (std::int64_t oh = 0; oh < d.out_h; ++oh)
                for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                    double m = 0.0, v = 0.0;
                    detail::conv_accumulate(d, stride, padding, n, oh, ow, o,
                                            [&](std::int64_t xi, std::int64_t wi) {
                                                const double xv = x.data[xi];
                                                m += static_cast<double>(w.mean[wi]) * xv;
                                                v += static_cast<double>(w.spread[wi]) * xv * xv;
                                            });
                    detail::bias_mean_var(w.bias, o, m, v);
                    const std::int64_t oi = ((n * d.out_ch + o) * d.out_h + oh) * d.out_w + ow;
                    detail::store_moments(m, v, out_kind, out.mean[oi], out.spread[oi]);
                }
    return out;
}

/// Variance floor below which a Gaussian is treated as deterministic.
inline constexpr double kReluVarianceFloor = 1e-12;

/// ReLU moment matching: the rectified Gaussian's first two moments,
/// returned as a Gaussian surrogate in me2 representation.
inline GaussianTensor relu(const GaussianTensor& a) {
    if (a.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("relu expects mv activations");
    GaussianTensor out(a.shape, MomentKind::MeanSecondRawMoment);
    const std::size_t n = a.mean.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = a.mean[i];
        const double var = a.spread[i];
        if (var < kReluVarianceFloor) {
            const double r = std::max(0.0, mu);
            out.mean[i] = static_cast<float>(r);
            out.spread[i] = static_cast<float>(r * r);
            continue;
        }
        const double gate = 0.5 * (1.0 + math::erf_approx(mu / std::sqrt(2.0 * var)));
        const double tail = std::sqrt(var / (2.0 * math::kPi)) * std::exp(-mu * mu / (2.0 * var));
        out.mean[i] = static_cast<float>(mu * gate + tail);
        out.spread[i] = static_cast<float>((var + mu * mu) * gate + mu * tail);
    }
    return out;
}

/// First two moments of max(A, B) for independent Gaussians (Clark).
/// Branch-light: degenerate windows (joint spread below floor) select the
/// dominant input directly.
inline void gaussian_max_pair(double m1, double v1, double m2, double v2, double& m_out,
                              double& v_out) {
    const double theta2 = v1 + v2;
    const double safe_theta = std::sqrt(std::max(theta2, 1e-24));
    const double alpha = (m1 - m2) / safe_theta;
    const double gate = 0.5 * (1.0 + math::erf_approx(alpha * math::kInvSqrt2));
    const double pdf = math::kInvSqrt2Pi * std::exp(-0.5 * alpha * alpha);
    const double m_an = m1 * gate + m2 * (1.0 - gate) + safe_theta * pdf;
    const double e2_an =
        (m1 * m1 + v1) * gate + (m2 * m2 + v2) * (1.0 - gate) + (m1 + m2) * safe_theta * pdf;
    const bool degenerate = theta2 < 1e-24;
    const bool first = m1 >= m2;
    m_out = degenerate ? (first ? m1 : m2) : m_an;
    v_out = degenerate ? (first ? v1 : v2) : std::max(0.0, e2_an - m_an * m_an);
}

namespace detail {

inline void check_pool_shapes(const GaussianTensor& a, int k) {
    if (a.kind != MomentKind::MeanVariance)
        throw RepresentationMismatch("maxpool expects mv activations");
    if (a.shape.size() != 4) throw ShapeMismatch("maxpool input must be [N, C, H, W]");
    if (k < 1) throw ShapeMismatch("pool window must be >= 1");
    if (a.shape[2] % k != 0 || a.shape[3] % k != 0)
        throw ShapeIndivisible("pool window " + std::to_string(k) + " does not divide " +
                               std::to_string(a.shape[2]) + "x" + std::to_string(a.shape[3]));
}

}  // namespace detail

/// Max pool over k x k windows (stride k) by repeated pairwise Gaussian-max
/// moment matching, folded in row-major window order. mv in, mv out.
inline GaussianTensor maxpool(const GaussianTensor& a, int k) {
    detail::check_pool_shapes(a, k);
    const std::int64_t batch = a.shape[0], ch = a.shape[1], h = a.shape[2], w = a.shape[3];
    const std::int64_t oh = h / k, ow = w / k;
    GaussianTensor out({batch, ch, oh, ow}, MomentKind::MeanVariance);
    for (std::int64_t nc = 0; nc < batch * ch; ++nc) {
        const float* pm = a.mean.data() + nc * h * w;
        const float* pv = a.spread.data() + nc * h * w;
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x) {
                double m = pm[(y * k) * w + x * k];
                double v = pv[(y * k) * w + x * k];
                for (std::int64_t dy = 0; dy < k; ++dy)
                    for (std::int64_t dx = 0; dx < k; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const std::int64_t idx = (y * k + dy) * w + (x * k + dx);
                        gaussian_max_pair(m, v, pm[idx], pv[idx], m, v);
                    }
                const std::int64_t oi = nc * oh * ow + y * ow + x;
                out.mean[oi] = static_cast<float>(m);
                out.spread[oi] = static_cast<float>(v);
            }
    }
    return out;
}

/// Specialized k=2 max pool: one flat loop over output pixels, fold fully
/// unrolled, no per-window index bookkeeping. Same fold order and pairwise
/// core as the generic operator.
inline GaussianTensor maxpool_vectorized_k2(const GaussianTensor& a) {
    detail::check_pool_shapes(a, 2);
    const std::int64_t batch = a.shape[0], ch = a.shape[1], h = a.shape[2], w = a.shape[3];
    const std::int64_t oh = h / 2, ow = w / 2;
    GaussianTensor out({batch, ch, oh, ow}, MomentKind::MeanVariance);
    const float* am = a.mean.data();
    const float* av = a.spread.data();
    const std::int64_t planes = batch * ch;
    const std::int64_t out_plane = oh * ow;
    for (std::int64_t p = 0; p < planes; ++p) {
        const std::int64_t in_base = p * h * w;
        const std::int64_t out_base = p * out_plane;
        for (std::int64_t t = 0; t < out_plane; ++t) {
            const std::int64_t y = t / ow, x = t % ow;
            const std::int64_t r0 = in_base + (2 * y) * w + 2 * x;
            const std::int64_t r1 = r0 + w;
            double m, v;
            gaussian_max_pair(am[r0], av[r0], am[r0 + 1], av[r0 + 1], m, v);
            gaussian_max_pair(m, v, am[r1], av[r1], m, v);
            gaussian_max_pair(m, v, am[r1 + 1], av[r1 + 1], m, v);
            out.mean[out_base + t] = static_cast<float>(m);
            out.spread[out_base + t] = static_cast<float>(v);
        }
    }
    return out;
}

/// [N, C, H, W] -> [N, C*H*W]; buffers reinterpreted, kind preserved.
inline GaussianTensor flatten(const GaussianTensor& a) {
    if (a.shape.size() < 2) throw ShapeMismatch("flatten needs a batched input");
    GaussianTensor out = a;
    std::int64_t rest = 1;
    for (std::size_t i = 1; i < a.shape.size(); ++i) rest *= a.shape[i];
    out.shape = {a.shape[0], rest};
    return out;
}

inline Tensor flatten(const Tensor& a) {
    if (a.shape.size() < 2) throw ShapeMismatch("flatten needs a batched input");
    Tensor out = a;
    std::int64_t rest = 1;
    for (std::size_t i = 1; i < a.shape.size(); ++i) rest *= a.shape[i];
    out.shape = {a.shape[0], rest};
    return out;
}

}  // namespace pfp
