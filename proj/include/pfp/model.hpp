#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pfp/kernels.hpp"
#include "pfp/logits.hpp"
#include "pfp/ops.hpp"
#include "pfp/rng.hpp"

namespace pfp {

// Sequential layer menu. Compute layers carry their Gaussian weights;
// *First variants consume the deterministic network input.
struct DenseFirstLayer {
    GaussianWeights weights;  // must be mv
    MomentKind out_kind = MomentKind::MeanVariance;
};
struct DenseLayer {
    GaussianWeights weights;  // must be me2
    MomentKind out_kind = MomentKind::MeanVariance;
};
struct Conv2dFirstLayer {
    GaussianWeights weights;  // must be mv
    int stride = 1;
    int padding = 0;
    MomentKind out_kind = MomentKind::MeanVariance;
};
struct Conv2dLayer {
    GaussianWeights weights;  // must be me2
    int stride = 1;
    int padding = 0;
    MomentKind out_kind = MomentKind::MeanVariance;
};
struct ReluLayer {};
struct MaxPoolLayer {
    int k = 2;
    bool vectorized = false;
};
struct FlattenLayer {};
struct ConvertLayer {
    MomentKind target = MomentKind::MeanVariance;
};

using LayerSpec = std::variant<DenseFirstLayer, DenseLayer, Conv2dFirstLayer, Conv2dLayer,
                               ReluLayer, MaxPoolLayer, FlattenLayer, ConvertLayer>;

inline const char* layer_type_name(const LayerSpec& l) {
    struct V {
        const char* operator()(const DenseFirstLayer&) { return "dense_first"; }
        const char* operator()(const DenseLayer&) { return "dense"; }
        const char* operator()(const Conv2dFirstLayer&) { return "conv2d_first"; }
        const char* operator()(const Conv2dLayer&) { return "conv2d"; }
        const char* operator()(const ReluLayer&) { return "relu"; }
        const char* operator()(const MaxPoolLayer&) { return "maxpool"; }
        const char* operator()(const FlattenLayer&) { return "flatten"; }
        const char* operator()(const ConvertLayer&) { return "convert"; }
    };
    return std::visit(V{}, l);
}

/// Sequential network description. `input_shape` is the per-item shape
/// (e.g. [784] or [1, 28, 28]); the batch dimension is added at run time.
struct ModelGraph {
    std::vector<LayerSpec> layers;
    std::vector<std::int64_t> input_shape;
    std::int64_t class_count = 0;
};

namespace detail {

// Symbolic state threaded through validation: per-item shape plus either
// "still deterministic" or the current moment representation.
struct FlowState {
    std::vector<std::int64_t> item_shape;
    bool plain = true;
    MomentKind kind = MomentKind::MeanVariance;
};

inline std::int64_t flat_dim(const std::vector<std::int64_t>& s) { return numel(s); }

inline void expect_kind(const FlowState& st, MomentKind want, const char* who,
                        std::size_t layer_idx) {
    if (st.plain)
        throw ContractError(std::string(who) + " at layer " + std::to_string(layer_idx) +
                            " cannot consume the deterministic network input");
    if (st.kind != want)
        throw ContractError(std::string(who) + " at layer " + std::to_string(layer_idx) +
                            " expects " + to_string(want) + " input but receives " +
                            to_string(st.kind));
}

}  // namespace detail

/// Checks the representation contract and shape consistency of the whole
/// graph. Throws ContractError / ShapeMismatch / RepresentationMismatch.
/// A graph that validates never hits a representation error at run time.
inline void validate_graph(const ModelGraph& g) {
    if (g.layers.empty()) throw ContractError("graph has no layers");
    detail::FlowState st;
    st.item_shape = g.input_shape;

    for (std::size_t li = 0; li < g.layers.size(); ++li) {
        const LayerSpec& layer = g.layers[li];
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            if (!st.plain)
                throw ContractError("dense_first at layer " + std::to_string(li) +
                                    " must be the first compute layer");
            if (d->weights.kind != MomentKind::MeanVariance)
                throw RepresentationMismatch("first-layer weights must be stored as mv");
            assert_valid(d->weights);
            if (d->weights.shape.size() != 2 ||
                d->weights.shape[1] != detail::flat_dim(st.item_shape))
                throw ShapeMismatch("dense_first weight shape does not match input at layer " +
                                    std::to_string(li));
            st = {{d->weights.shape[0]}, false, d->out_kind};
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            detail::expect_kind(st, MomentKind::MeanSecondRawMoment, "dense", li);
            if (d2->weights.kind != MomentKind::MeanSecondRawMoment)
                throw RepresentationMismatch("dense weights must be stored as me2");
            assert_valid(d2->weights);
            if (st.item_shape.size() != 1)
                throw ShapeMismatch("dense at layer " + std::to_string(li) +
                                    " needs a flat input (insert flatten)");
            if (d2->weights.shape.size() != 2 || d2->weights.shape[1] != st.item_shape[0])
                throw ShapeMismatch("dense weight shape does not match input at layer " +
                                    std::to_string(li));
            st = {{d2->weights.shape[0]}, false, d2->out_kind};
        } else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) {
            if (!st.plain)
                throw ContractError("conv2d_first at layer " + std::to_string(li) +
                                    " must be the first compute layer");
            if (c->weights.kind != MomentKind::MeanVariance)
                throw RepresentationMismatch("first-layer weights must be stored as mv");
            assert_valid(c->weights);
            const auto dims = detail::check_conv_shapes(
                {1, st.item_shape.at(0), st.item_shape.at(1), st.item_shape.at(2)}, c->weights,
                c->stride, c->padding);
            st = {{dims.out_ch, dims.out_h, dims.out_w}, false, c->out_kind};
        } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
            detail::expect_kind(st, MomentKind::MeanSecondRawMoment, "conv2d", li);
            if (c2->weights.kind != MomentKind::MeanSecondRawMoment)
                throw RepresentationMismatch("conv2d weights must be stored as me2");
            assert_valid(c2->weights);
            if (st.item_shape.size() != 3)
                throw ShapeMismatch("conv2d at layer " + std::to_string(li) +
                                    " needs an [C, H, W] input");
            const auto dims = detail::check_conv_shapes(
                {1, st.item_shape[0], st.item_shape[1], st.item_shape[2]}, c2->weights,
                c2->stride, c2->padding);
            st = {{dims.out_ch, dims.out_h, dims.out_w}, false, c2->out_kind};
        } else if (std::get_if<ReluLayer>(&layer)) {
            detail::expect_kind(st, MomentKind::MeanVariance, "relu", li);
            st.kind = MomentKind::MeanSecondRawMoment;
        } else if (auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            detail::expect_kind(st, MomentKind::MeanVariance, "maxpool", li);
            if (st.item_shape.size() != 3)
                throw ShapeMismatch("maxpool at layer " + std::to_string(li) +
                                    " needs an [C, H, W] input");
            if (p->k < 1 || st.item_shape[1] % p->k != 0 || st.item_shape[2] % p->k != 0)
                throw ShapeIndivisible("maxpool window does not divide input at layer " +
                                       std::to_string(li));
            st.item_shape = {st.item_shape[0], st.item_shape[1] / p->k, st.item_shape[2] / p->k};
        } else if (std::get_if<FlattenLayer>(&layer)) {
            st.item_shape = {detail::flat_dim(st.item_shape)};
        } else if (auto* cv = std::get_if<ConvertLayer>(&layer)) {
            if (st.plain)
                throw ContractError("convert at layer " + std::to_string(li) +
                                    " cannot operate on the deterministic network input");
            st.kind = cv->target;
        }
    }
    if (st.plain) throw ContractError("graph has no compute layer");
    if (detail::flat_dim(st.item_shape) != g.class_count)
        throw ShapeMismatch("graph output width " + std::to_string(detail::flat_dim(st.item_shape)) +
                            " does not match class_count " + std::to_string(g.class_count));
}

/// Inserts explicit Convert layers wherever consecutive layers disagree on
/// representation. Conversion is never silent at load time; this builder
/// is the opt-in way to close an open contract.
inline ModelGraph insert_converts(const ModelGraph& g) {
    ModelGraph out;
    out.input_shape = g.input_shape;
    out.class_count = g.class_count;
    bool plain = true;
    MomentKind kind = MomentKind::MeanVariance;
    auto need = [&](MomentKind want) {
        if (!plain && kind != want) out.layers.push_back(ConvertLayer{want});
        kind = want;
    };
    for (const LayerSpec& layer : g.layers) {
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            out.layers.push_back(layer);
            plain = false;
            kind = d->out_kind;
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            need(MomentKind::MeanSecondRawMoment);
            out.layers.push_back(layer);
            kind = d2->out_kind;
        } else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) {
            out.layers.push_back(layer);
            plain = false;
            kind = c->out_kind;
        } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
            need(MomentKind::MeanSecondRawMoment);
            out.layers.push_back(layer);
            kind = c2->out_kind;
        } else if (std::get_if<ReluLayer>(&layer)) {
            need(MomentKind::MeanVariance);
            out.layers.push_back(layer);
            kind = MomentKind::MeanSecondRawMoment;
        } else if (std::get_if<MaxPoolLayer>(&layer)) {
            need(MomentKind::MeanVariance);
            out.layers.push_back(layer);
        } else if (std::get_if<ConvertLayer>(&layer)) {
            // Explicit converts from the caller are kept as-is.
            out.layers.push_back(layer);
            kind = std::get<ConvertLayer>(layer).target;
        } else {
            out.layers.push_back(layer);
        }
    }
    return out;
}

/// Execution options; a tuned schedule can be plugged under the dense layers.
struct RunOptions {
    std::optional<kernels::KernelConfig> dense_config;
};

/// Single probabilistic forward pass over the whole graph. The input batch
/// is a plain tensor shaped [N, input_shape...]; the result holds the
/// output logit means and variances [N, K].
inline LogitDistribution run_pfp(const ModelGraph& g, const Tensor& input,
                                 const RunOptions& opts = {}) {
    std::vector<std::int64_t> want = {input.shape.empty() ? 0 : input.shape[0]};
    want.insert(want.end(), g.input_shape.begin(), g.input_shape.end());
    if (input.shape != want)
        throw ShapeMismatch("input batch shape does not match graph input shape");

    Tensor plain = input;
    bool is_plain = true;
    GaussianTensor state;

    for (const LayerSpec& layer : g.layers) {
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            Tensor flat = plain.shape.size() > 2 ? flatten(plain) : plain;
            state = dense_first(flat, d->weights, d->out_kind);
            is_plain = false;
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            state = opts.dense_config
                        ? kernels::dense_kernel(state, d2->weights, *opts.dense_config,
                                                d2->out_kind)
                        : dense(state, d2->weights, d2->out_kind);
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
            if (is_plain) throw ContractError("convert cannot operate on the network input");
            state = convert(state, cv->target);
        }
    }
    if (is_plain) throw ContractError("graph has no compute layer");

    const GaussianTensor out = convert(flatten(state), MomentKind::MeanVariance);
    LogitDistribution logits;
    logits.items = out.shape[0];
    logits.classes = out.shape[1];
    logits.mean = out.mean;
    logits.variance = out.spread;
    return logits;
}

namespace detail {

inline void calibrate_weights(GaussianWeights& w, double factor) {
    if (w.kind == MomentKind::MeanVariance) {
        for (auto& s : w.spread) s = static_cast<float>(static_cast<double>(s) * factor);
    } else {
        for (std::size_t i = 0; i < w.spread.size(); ++i) {
            const double m = w.mean[i];
            const double var = std::max(0.0, static_cast<double>(w.spread[i]) - m * m);
            w.spread[i] = static_cast<float>(m * m + factor * var);
        }
    }
    if (w.bias.kind == BiasKind::Probabilistic)
        for (auto& s : w.bias.variance) s = static_cast<float>(static_cast<double>(s) * factor);
}

}  // namespace detail

/// Global reweighting of every weight variance by `factor`; means are
/// untouched (second-raw-moment weights recomputed as mu^2 + factor*var).
inline ModelGraph calibrate(const ModelGraph& g, double factor) {
    if (!(factor > 0.0)) throw NonPositiveFactor("calibration factor must be > 0");
    ModelGraph out = g;
    if (factor == 1.0) return out;
    for (LayerSpec& layer : out.layers) {
        if (auto* d = std::get_if<DenseFirstLayer>(&layer))
            detail::calibrate_weights(d->weights, factor);
        else if (auto* d2 = std::get_if<DenseLayer>(&layer))
            detail::calibrate_weights(d2->weights, factor);
        else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer))
            detail::calibrate_weights(c->weights, factor);
        else if (auto* c2 = std::get_if<Conv2dLayer>(&layer))
            detail::calibrate_weights(c2->weights, factor);
    }
    return out;
}

namespace detail {

// Deterministic random weights: mu ~ N(0, 2/fan_in), sigma^2 ~ U[1e-4, 1e-2].
inline GaussianWeights synth_weights(std::vector<std::int64_t> shape, std::int64_t fan_in,
                                     MomentKind kind, std::uint64_t seed, std::uint32_t layer) {
    GaussianWeights w;
    w.shape = std::move(shape);
    const auto n = static_cast<std::size_t>(w.numel());
    w.mean.resize(n);
    w.spread.resize(n);
    const double mu_scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = mu_scale * rng::normal_at(seed, 0, layer * 4u + 0u, i);
        const double var = rng::uniform_at(seed, 0, layer * 4u + 1u, i, 1e-4, 1e-2);
        w.mean[i] = static_cast<float>(mu);
        w.spread[i] = static_cast<float>(kind == MomentKind::MeanVariance ? var : mu * mu + var);
    }
    w.kind = kind;

    const auto out_n = static_cast<std::size_t>(w.out_dim());
    std::vector<float> bm(out_n), bv(out_n);
    for (std::size_t i = 0; i < out_n; ++i) {
        bm[i] = static_cast<float>(mu_scale * rng::normal_at(seed, 0, layer * 4u + 2u, i));
        bv[i] = static_cast<float>(rng::uniform_at(seed, 0, layer * 4u + 3u, i, 1e-4, 1e-2));
    }
    w.bias = BiasMode::probabilistic(std::move(bm), std::move(bv));
    return w;
}

}  // namespace detail

/// Random MLP fixture: dims {d0, d1, ..., K} become dense_first(d0->d1),
/// relu, dense(d1->d2), ... Weights are deterministic in the seed.
inline ModelGraph synth_mlp(const std::vector<std::int64_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ShapeMismatch("mlp needs at least [d_in, d_out]");
    ModelGraph g;
    g.input_shape = {dims[0]};
    g.class_count = dims.back();
    std::uint32_t layer = 0;
    g.layers.push_back(DenseFirstLayer{
        detail::synth_weights({dims[1], dims[0]}, dims[0], MomentKind::MeanVariance, seed,
                              layer++),
        MomentKind::MeanVariance});
    for (std::size_t i = 1; i + 1 < dims.size(); ++i) {
        g.layers.push_back(ReluLayer{});
        g.layers.push_back(DenseLayer{
            detail::synth_weights({dims[i + 1], dims[i]}, dims[i],
                                  MomentKind::MeanSecondRawMoment, seed, layer++),
            MomentKind::MeanVariance});
    }
    validate_graph(g);
    return g;
}

/// Random LeNet-5 fixture (classic 6/16-channel, 5x5-kernel configuration)
/// on [1, 28, 28] inputs with 10 classes; explicit converts around the
/// variance-only pooling stages.
inline ModelGraph synth_lenet(std::uint64_t seed) {
    ModelGraph g;
    g.input_shape = {1, 28, 28};
    g.class_count = 10;
    std::uint32_t layer = 0;

    g.layers.push_back(Conv2dFirstLayer{
        detail::synth_weights({6, 1, 5, 5}, 25, MomentKind::MeanVariance, seed, layer++), 1, 2,
        MomentKind::MeanVariance});
    g.layers.push_back(ReluLayer{});
    g.layers.push_back(ConvertLayer{MomentKind::MeanVariance});
    g.layers.push_back(MaxPoolLayer{2, true});
    g.layers.push_back(ConvertLayer{MomentKind::MeanSecondRawMoment});
    g.layers.push_back(Conv2dLayer{
        detail::synth_weights({16, 6, 5, 5}, 150, MomentKind::MeanSecondRawMoment, seed,
                              layer++),
        1, 0, MomentKind::MeanVariance});
    g.layers.push_back(ReluLayer{});
    g.layers.push_back(ConvertLayer{MomentKind::MeanVariance});
    g.layers.push_back(MaxPoolLayer{2, true});
    g.layers.push_back(FlattenLayer{});
    g.layers.push_back(ConvertLayer{MomentKind::MeanSecondRawMoment});
    g.layers.push_back(DenseLayer{
        detail::synth_weights({120, 400}, 400, MomentKind::MeanSecondRawMoment, seed, layer++),
        MomentKind::MeanVariance});
    g.layers.push_back(ReluLayer{});
    g.layers.push_back(DenseLayer{
        detail::synth_weights({84, 120}, 120, MomentKind::MeanSecondRawMoment, seed, layer++),
        MomentKind::MeanVariance});
    g.layers.push_back(ReluLayer{});
    g.layers.push_back(DenseLayer{
        detail::synth_weights({10, 84}, 84, MomentKind::MeanSecondRawMoment, seed, layer++),
        MomentKind::MeanVariance});
    validate_graph(g);
    return g;
}

/// Named fixture entry point: arch is "mlp" or "lenet".
inline ModelGraph synth_model(const std::string& arch, const std::vector<std::int64_t>& dims,
                              std::uint64_t seed) {
    if (arch == "mlp") return synth_mlp(dims, seed);
    if (arch == "lenet") return synth_lenet(seed);
    throw InvalidConfig("unknown architecture '" + arch + "' (expected mlp or lenet)");
}

}  // namespace pfp
