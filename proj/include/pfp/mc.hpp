#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <variant>
#include <vector>

#include "pfp/logits.hpp"
#include "pfp/model.hpp"

namespace pfp::mc {

/// Logit samples of the sampling baseline: [S, N, K] f32.
struct SampleBatch {
    std::int64_t samples = 0;
    std::int64_t items = 0;
    std::int64_t classes = 0;
    std::vector<float> logits;
    std::uint64_t seed = 0;

    float at(std::int64_t s, std::int64_t n, std::int64_t k) const {
        return logits[static_cast<std::size_t>((s * items + n) * classes + k)];
    }
};

/// One concrete weight realization per compute layer (empty elsewhere).
struct SampledLayer {
    std::vector<float> weights;
    std::vector<float> bias;
};

namespace detail {

inline void sample_buffer(const std::vector<float>& mean, const std::vector<float>& variance,
                          std::uint64_t seed, std::uint32_t sample, std::uint32_t stream,
                          std::vector<float>& out) {
    out.resize(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double sd = std::sqrt(static_cast<double>(variance[i]));
        out[i] = static_cast<float>(mean[i] + sd * rng::normal_at(seed, sample, stream, i));
    }
}

inline void sample_layer(const GaussianWeights& w, std::uint64_t seed, std::uint32_t sample,
                         std::uint32_t layer_index, SampledLayer& out) {
    const GaussianWeights mv = weights_as_mv(w);
    sample_buffer(mv.mean, mv.spread, seed, sample, layer_index * 2u, out.weights);
    switch (mv.bias.kind) {
        case BiasKind::None: out.bias.clear(); break;
        case BiasKind::Deterministic: out.bias = mv.bias.mean; break;
        case BiasKind::Probabilistic:
            sample_buffer(mv.bias.mean, mv.bias.variance, seed, sample, layer_index * 2u + 1u,
                          out.bias);
            break;
    }
}

}  // namespace detail

/// Draws one complete weight set: every weight w ~ N(mu_w, sigma_w^2),
/// deterministic in (seed, sample_index) regardless of thread scheduling.
inline std::vector<SampledLayer> sample_weights(const ModelGraph& g, std::uint64_t seed,
                                                std::uint32_t sample_index) {
    std::vector<SampledLayer> out(g.layers.size());
    for (std::size_t li = 0; li < g.layers.size(); ++li) {
        const LayerSpec& layer = g.layers[li];
        const GaussianWeights* w = nullptr;
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) w = &d->weights;
        else if (auto* d2 = std::get_if<DenseLayer>(&layer)) w = &d2->weights;
        else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) w = &c->weights;
        else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) w = &c2->weights;
        if (w)
            detail::sample_layer(*w, seed, sample_index, static_cast<std::uint32_t>(li),
                                 out[li]);
    }
    return out;
}

namespace detail {

// Deterministic forward pass with a sampled weight set; f32 throughout to
// mirror the PFP tensor precision.
inline Tensor deterministic_forward(const ModelGraph& g,
                                    const std::vector<SampledLayer>& sampled,
                                    const Tensor& input) {
    Tensor act = input;
    for (std::size_t li = 0; li < g.layers.size(); ++li) {
        const LayerSpec& layer = g.layers[li];
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            if (act.shape.size() > 2) act = flatten(act);
            act = [&] {
                const std::int64_t batch = act.shape[0], d_in = act.shape[1],
                                   d_out = d->weights.shape[0];
                Tensor y({batch, d_out});
                const std::vector<float>& wv = sampled[li].weights;
                const std::vector<float>& bv = sampled[li].bias;
                for (std::int64_t n = 0; n < batch; ++n)
                    for (std::int64_t i = 0; i < d_out; ++i) {
                        float acc = bv.empty() ? 0.0f : bv[static_cast<std::size_t>(i)];
                        const float* wr = wv.data() + i * d_in;
                        const float* xr = act.data.data() + n * d_in;
                        for (std::int64_t j = 0; j < d_in; ++j) acc += wr[j] * xr[j];
                        y.data[n * d_out + i] = acc;
                    }
                return y;
            }();
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            const std::int64_t batch = act.shape[0], d_in = act.shape[1],
                               d_out = d2->weights.shape[0];
            Tensor y({batch, d_out});
            const std::vector<float>& wv = sampled[li].weights;
            const std::vector<float>& bv = sampled[li].bias;
            for (std::int64_t n = 0; n < batch; ++n)
                for (std::int64_t i = 0; i < d_out; ++i) {
                    float acc = bv.empty() ? 0.0f : bv[static_cast<std::size_t>(i)];
                    const float* wr = wv.data() + i * d_in;
                    const float* xr = act.data.data() + n * d_in;
                    for (std::int64_t j = 0; j < d_in; ++j) acc += wr[j] * xr[j];
                    y.data[n * d_out + i] = acc;
                }
            act = std::move(y);
        } else if (auto* cl = std::get_if<Conv2dFirstLayer>(&layer)) {
            act = [&] {
                const auto dd = pfp::detail::check_conv_shapes(act.shape, cl->weights,
                                                               cl->stride, cl->padding);
                Tensor y({dd.batch, dd.out_ch, dd.out_h, dd.out_w});
                const std::vector<float>& wv = sampled[li].weights;
                const std::vector<float>& bv = sampled[li].bias;
                for (std::int64_t n = 0; n < dd.batch; ++n)
                    for (std::int64_t o = 0; o < dd.out_ch; ++o)
                        for (std::int64_t oh = 0; oh < dd.out_h; ++oh)
                            for (std::int64_t ow = 0; ow < dd.out_w; ++ow) {
                                float acc =
                                    bv.empty() ? 0.0f : bv[static_cast<std::size_t>(o)];
                                pfp::detail::conv_accumulate(
                                    dd, cl->stride, cl->padding, n, oh, ow, o,
                                    [&](std::int64_t xi, std::int64_t wi) {
                                        acc += wv[static_cast<std::size_t>(wi)] *
                                               act.data[static_cast<std::size_t>(xi)];
                                    });
                                y.data[((n * dd.out_ch + o) * dd.out_h + oh) * dd.out_w + ow] =
                                    acc;
                            }
                return y;
            }();
        } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
            act = [&] {
                const auto dd = pfp::detail::check_conv_shapes(act.shape, c2->weights,
                                                               c2->stride, c2->padding);
                Tensor y({dd.batch, dd.out_ch, dd.out_h, dd.out_w});
                const std::vector<float>& wv = sampled[li].weights;
                const std::vector<float>& bv = sampled[li].bias;
                for (std::int64_t n = 0; n < dd.batch; ++n)
                    for (std::int64_t o = 0; o < dd.out_ch; ++o)
                        for (std::int64_t oh = 0; oh < dd.out_h; ++oh)
                            for (std::int64_t ow = 0; ow < dd.out_w; ++ow) {
                                float acc =
                                    bv.empty() ? 0.0f : bv[static_cast<std::size_t>(o)];
                                pfp::detail::conv_accumulate(
                                    dd, c2->stride, c2->padding, n, oh, ow, o,
                                    [&](std::int64_t xi, std::int64_t wi) {
                                        acc += wv[static_cast<std::size_t>(wi)] *
                                               act.data[static_cast<std::size_t>(xi)];
                                    });
                                y.data[((n * dd.out_ch + o) * dd.out_h + oh) * dd.out_w + ow] =
                                    acc;
                            }
                return y;
            }();
        } else if (std::get_if<ReluLayer>(&layer)) {
            for (auto& v : act.data) v = std::max(0.0f, v);
        } else if (auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            const std::int64_t batch = act.shape[0], ch = act.shape[1], h = act.shape[2],
                               w = act.shape[3];
            const std::int64_t k = p->k, oh = h / k, ow = w / k;
            Tensor y({batch, ch, oh, ow});
            for (std::int64_t nc = 0; nc < batch * ch; ++nc) {
                const float* plane = act.data.data() + nc * h * w;
                for (std::int64_t yy = 0; yy < oh; ++yy)
                    for (std::int64_t xx = 0; xx < ow; ++xx) {
                        float m = plane[(yy * k) * w + xx * k];
                        for (std::int64_t dy = 0; dy < k; ++dy)
                            for (std::int64_t dx = 0; dx < k; ++dx)
                                m = std::max(m, plane[(yy * k + dy) * w + (xx * k + dx)]);
                        y.data[nc * oh * ow + yy * ow + xx] = m;
                    }
            }
            act = std::move(y);
        } else if (std::get_if<FlattenLayer>(&layer)) {
            act = flatten(act);
        }
        // Convert layers are representation bookkeeping; deterministic
        // execution ignores them.
    }
    if (act.shape.size() > 2) act = flatten(act);
    return act;
}

}  // namespace detail

/// Sampling-based prediction: S weight draws, S deterministic forward
/// passes. Sample s always uses weight set s, so results are independent
/// of the thread count.
inline SampleBatch mc_predict(const ModelGraph& g, const Tensor& input, std::int64_t samples,
                              std::uint64_t seed, int threads = 0) {
    if (samples < 1) throw TooFewSamples("mc_predict needs samples >= 1");
    SampleBatch batch;
    batch.samples = samples;
    batch.items = input.shape.empty() ? 0 : input.shape[0];
    batch.classes = g.class_count;
    batch.seed = seed;
    batch.logits.resize(static_cast<std::size_t>(samples * batch.items * batch.classes));

    if (threads <= 0)
        threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = static_cast<int>(std::min<std::int64_t>(threads, samples));

    auto worker = [&](int tid) {
        for (std::int64_t s = tid; s < samples; s += threads) {
            const auto sampled = sample_weights(g, seed, static_cast<std::uint32_t>(s));
            const Tensor logits = detail::deterministic_forward(g, sampled, input);
            std::copy(logits.data.begin(), logits.data.end(),
                      batch.logits.begin() + s * batch.items * batch.classes);
        }
    };
    if (threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    return batch;
}

/// Full-precision per-(item, class) moments.
struct MomentsF64 {
    std::int64_t items = 0;
    std::int64_t classes = 0;
    std::vector<double> mean;
    std::vector<double> variance;  // unbiased (n-1)
};

/// Streaming Welford estimates over the sample axis, 64-bit accumulation.
inline MomentsF64 mc_moments_f64(const SampleBatch& batch) {
    if (batch.samples < 2) throw TooFewSamples("mc_moments needs at least 2 samples");
    const std::int64_t cells = batch.items * batch.classes;
    MomentsF64 out;
    out.items = batch.items;
    out.classes = batch.classes;
    out.mean.assign(static_cast<std::size_t>(cells), 0.0);
    std::vector<double> m2(static_cast<std::size_t>(cells), 0.0);
    for (std::int64_t s = 0; s < batch.samples; ++s) {
        const float* row = batch.logits.data() + s * cells;
        const double inv = 1.0 / static_cast<double>(s + 1);
        for (std::int64_t c = 0; c < cells; ++c) {
            const double x = row[c];
            const double d = x - out.mean[c];
            out.mean[c] += d * inv;
            m2[c] += d * (x - out.mean[c]);
        }
    }
    out.variance.resize(static_cast<std::size_t>(cells));
    const double inv_n1 = 1.0 / static_cast<double>(batch.samples - 1);
    for (std::int64_t c = 0; c < cells; ++c)
        out.variance[static_cast<std::size_t>(c)] = std::max(0.0, m2[c] * inv_n1);
    return out;
}

/// The f64 moments rounded into the f32 logit-distribution container.
inline LogitDistribution mc_moments(const SampleBatch& batch) {
    const MomentsF64 m = mc_moments_f64(batch);
    LogitDistribution out;
    out.items = m.items;
    out.classes = m.classes;
    out.mean.assign(m.mean.begin(), m.mean.end());
    out.variance.assign(m.variance.begin(), m.variance.end());
    return out;
}

}  // namespace pfp::mc
