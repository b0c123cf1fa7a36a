#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include "pfp/mc.hpp"
#include "pfp/model.hpp"

namespace pfp::bench {

struct LatencyStat {
    double median_ns = 0.0;
    double mad_ns = 0.0;
};

/// Median and median-absolute-deviation of fn()'s latency over `reps`
/// timed runs (after `warmups` untimed ones), monotonic clock.
template <typename Fn>
inline LatencyStat measure(Fn&& fn, int reps, int warmups = 2) {
    for (int i = 0; i < warmups; ++i) fn();
    std::vector<double> t(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const double t0 = kernels::now_ns();
        fn();
        t[static_cast<std::size_t>(i)] = kernels::now_ns() - t0;
    }
    std::sort(t.begin(), t.end());
    auto median_of = [](std::vector<double>& v) {
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    LatencyStat s;
    s.median_ns = median_of(t);
    for (auto& x : t) x = std::fabs(x - s.median_ns);
    std::sort(t.begin(), t.end());
    s.mad_ns = median_of(t);
    return s;
}

/// One line of the latency report CSV.
struct Row {
    std::string target;
    std::string op;
    std::string config;
    double median_ns = 0.0;
    double mad_ns = 0.0;
    double fraction = 0.0;
};

inline std::string to_csv(const std::vector<Row>& rows) {
    std::string out = "target,operator,config,median_ns,mad_ns,fraction\n";
    char buf[256];
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.0f,%.0f,%.4f\n", r.target.c_str(),
                      r.op.c_str(), r.config.c_str(), r.median_ns, r.mad_ns, r.fraction);
        out += buf;
    }
    return out;
}

namespace detail {

using LayerInput = std::variant<Tensor, GaussianTensor>;

// Replays the forward pass, recording the input handed to each layer.
inline std::vector<LayerInput> collect_layer_inputs(const ModelGraph& g, const Tensor& input) {
    std::vector<LayerInput> inputs;
    inputs.reserve(g.layers.size());
    Tensor plain = input;
    GaussianTensor state;
    bool is_plain = true;
    for (const LayerSpec& layer : g.layers) {
        if (is_plain)
            inputs.emplace_back(plain);
        else
            inputs.emplace_back(state);
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            Tensor flat = plain.shape.size() > 2 ? flatten(plain) : plain;
            state = dense_first(flat, d->weights, d->out_kind);
            is_plain = false;
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            state = dense(state, d2->weights, d2->out_kind);
        } else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) {
            state = conv2d_first(plain, c->weights, c->stride, c->padding, c->out_kind);
            is_plain = false;
        } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
            state = conv2d(state, c2->weights, c2->stride, c2->padding, c2->out_kind);
        } else if (std::get_if<ReluLayer>(&layer)) {
            state = relu(state);
        } else if (auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            state = (p->vectorized && p->k == 2) ? maxpool_vectorized_k2(state)
                                                 : maxpool(state, p->k);
        } else if (std::get_if<FlattenLayer>(&layer)) {
            if (is_plain)
                plain = flatten(plain);
            else
                state = flatten(state);
        } else if (auto* cv = std::get_if<ConvertLayer>(&layer)) {
            state = convert(state, cv->target);
        }
    }
    return inputs;
}

inline void run_layer(const LayerSpec& layer, const LayerInput& in) {
    if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
        const Tensor& x = std::get<Tensor>(in);
        (void)dense_first(x.shape.size() > 2 ? flatten(x) : x, d->weights, d->out_kind);
    } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
        (void)dense(std::get<GaussianTensor>(in), d2->weights, d2->out_kind);
    } else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) {
        (void)conv2d_first(std::get<Tensor>(in), c->weights, c->stride, c->padding, c->out_kind);
    } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
        (void)conv2d(std::get<GaussianTensor>(in), c2->weights, c2->stride, c2->padding,
                     c2->out_kind);
    } else if (std::get_if<ReluLayer>(&layer)) {
        (void)relu(std::get<GaussianTensor>(in));
    } else if (auto* p = std::get_if<MaxPoolLayer>(&layer)) {
        if (p->vectorized && p->k == 2)
            (void)maxpool_vectorized_k2(std::get<GaussianTensor>(in));
        else
            (void)maxpool(std::get<GaussianTensor>(in), p->k);
    } else if (std::get_if<FlattenLayer>(&layer)) {
        if (auto* t = std::get_if<Tensor>(&in))
            (void)flatten(*t);
        else
            (void)flatten(std::get<GaussianTensor>(in));
    } else if (auto* cv = std::get_if<ConvertLayer>(&layer)) {
        (void)convert(std::get<GaussianTensor>(in), cv->target);
    }
}

}  // namespace detail

/// Per-layer latency breakdown plus an end-to-end row. Fractions are each
/// layer's share of the summed per-layer medians (the end-to-end row
/// carries fraction 1).
inline std::vector<Row> bench_model(const ModelGraph& g, const Tensor& input,
                                    const std::string& target, int reps) {
    const auto inputs = detail::collect_layer_inputs(g, input);
    std::vector<Row> rows;
    double sum = 0.0;
    for (std::size_t li = 0; li < g.layers.size(); ++li) {
        const LatencyStat s =
            measure([&] { detail::run_layer(g.layers[li], inputs[li]); }, reps);
        rows.push_back({target, std::string(layer_type_name(g.layers[li])) + std::to_string(li),
                        layer_type_name(g.layers[li]), s.median_ns, s.mad_ns, 0.0});
        sum += s.median_ns;
    }
    for (Row& r : rows) r.fraction = r.median_ns / sum;
    const LatencyStat e2e = measure([&] { (void)run_pfp(g, input); }, reps);
    rows.push_back({target, "end_to_end", "", e2e.median_ns, e2e.mad_ns, 1.0});
    return rows;
}

/// Aggregates per-layer rows by operator type (config column), skipping the
/// end-to-end row. Used for the "which operator dominates" question.
inline std::vector<std::pair<std::string, double>> fraction_by_operator(
    const std::vector<Row>& rows) {
    std::vector<std::pair<std::string, double>> agg;
    for (const Row& r : rows) {
        if (r.op == "end_to_end") continue;
        bool found = false;
        for (auto& [name, frac] : agg)
            if (name == r.config) {
                frac += r.fraction;
                found = true;
            }
        if (!found) agg.emplace_back(r.config, r.fraction);
    }
    return agg;
}

struct SpeedupRow {
    std::int64_t batch = 0;
    double pfp_ns = 0.0;
    double mc_ns = 0.0;
    double speedup = 0.0;
};

inline std::string to_csv(const std::vector<SpeedupRow>& rows) {
    std::string out = "batch,pfp_median_ns,mc_median_ns,speedup\n";
    char buf[160];
    for (const SpeedupRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.0f,%.0f,%.2f\n",
                      static_cast<long long>(r.batch), r.pfp_ns, r.mc_ns, r.speedup);
        out += buf;
    }
    return out;
}

/// End-to-end PFP vs sampling baseline (mc_predict with `samples` draws)
/// across mini-batch sizes. Inputs are deterministic in `seed`.
inline std::vector<SpeedupRow> bench_pfp_vs_mc(const ModelGraph& g,
                                               const std::vector<std::int64_t>& batches,
                                               std::int64_t samples, std::uint64_t seed,
                                               int reps, int mc_threads = 1) {
    std::vector<SpeedupRow> rows;
    const std::int64_t item = numel(g.input_shape);
    for (std::int64_t b : batches) {
        Tensor input({b, item});
        std::vector<std::int64_t> full_shape;
        full_shape.push_back(b);
        for (auto d : g.input_shape) full_shape.push_back(d);
        input.shape = full_shape;
        for (std::size_t i = 0; i < input.data.size(); ++i)
            input.data[i] =
                static_cast<float>(rng::uniform_at(seed, 0, 0xBE7Cu, i, -1.0, 1.0));
        SpeedupRow r;
        r.batch = b;
        r.pfp_ns = measure([&] { (void)run_pfp(g, input); }, reps).median_ns;
        r.mc_ns =
            measure([&] { (void)mc::mc_predict(g, input, samples, seed, mc_threads); },
                    std::max(5, reps / 2))
                .median_ns;
        r.speedup = r.mc_ns / r.pfp_ns;
        rows.push_back(r);
    }
    return rows;
}

struct PairBench {
    double joint_ns = 0.0;
    double split_ns = 0.0;
};

/// Joint dense vs the split mean/variance operator pair on one layer shape.
inline PairBench bench_joint_vs_split(std::int64_t batch, std::int64_t d_in, std::int64_t d_out,
                                      std::uint64_t seed, int reps) {
    GaussianTensor x({batch, d_in}, MomentKind::MeanSecondRawMoment);
    for (std::size_t i = 0; i < x.mean.size(); ++i) {
        const double mu = rng::uniform_at(seed, 0, 0x50u, i, 0.0, 1.0);
        x.mean[i] = static_cast<float>(mu);
        x.spread[i] = static_cast<float>(mu * mu + rng::uniform_at(seed, 1, 0x51u, i, 0.0, 1.0));
    }
    GaussianWeights w;
    w.shape = {d_out, d_in};
    w.kind = MomentKind::MeanSecondRawMoment;
    w.mean.resize(static_cast<std::size_t>(d_out * d_in));
    w.spread.resize(w.mean.size());
    for (std::size_t i = 0; i < w.mean.size(); ++i) {
        const double mu = rng::uniform_at(seed, 2, 0x52u, i, -1.0, 1.0);
        w.mean[i] = static_cast<float>(mu);
        w.spread[i] = static_cast<float>(mu * mu + rng::uniform_at(seed, 3, 0x53u, i, 0.0, 0.1));
    }
    PairBench pb;
    pb.joint_ns =
        measure([&] { (void)dense(x, w, MomentKind::MeanVariance); }, reps).median_ns;
    pb.split_ns = measure(
                      [&] {
                          (void)dense_split_mean(x, w);
                          (void)dense_split_var(x, w);
                      },
                      reps)
                      .median_ns;
    return pb;
}

/// Generic vs fixed-k=2 max pool on one input shape (report-only).
inline PairBench bench_maxpool_k2(const std::vector<std::int64_t>& shape, std::uint64_t seed,
                                  int reps) {
    GaussianTensor a(shape, MomentKind::MeanVariance);
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        a.mean[i] = static_cast<float>(rng::uniform_at(seed, 0, 0x60u, i, -2.0, 2.0));
        a.spread[i] = static_cast<float>(rng::uniform_at(seed, 1, 0x61u, i, 0.0, 2.0));
    }
    PairBench pb;
    pb.joint_ns = measure([&] { (void)maxpool_vectorized_k2(a); }, reps).median_ns;
    pb.split_ns = measure([&] { (void)maxpool(a, 2); }, reps).median_ns;
    return pb;
}

}  // namespace pfp::bench
