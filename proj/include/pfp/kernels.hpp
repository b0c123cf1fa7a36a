#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "pfp/ops.hpp"
#include "pfp/rng.hpp"

namespace pfp::kernels {

/// Nesting order of the (m, n, k) loops, applied to both the block loops
/// and the intra-block loops. m = batch row, n = output neuron, k = reduction.
enum class LoopOrder { MNK, MKN, NMK, NKM, KMN, KNM };

inline const char* to_string(LoopOrder o) {
    switch (o) {
        case LoopOrder::MNK: return "mnk";
        case LoopOrder::MKN: return "mkn";
        case LoopOrder::NMK: return "nmk";
        case LoopOrder::NKM: return "nkm";
        case LoopOrder::KMN: return "kmn";
        case LoopOrder::KNM: return "knm";
    }
    return "?";
}

inline LoopOrder loop_order_from_string(const std::string& s) {
    for (LoopOrder o : {LoopOrder::MNK, LoopOrder::MKN, LoopOrder::NMK, LoopOrder::NKM,
                        LoopOrder::KMN, LoopOrder::KNM})
        if (s == to_string(o)) return o;
    throw InvalidConfig("unknown loop order '" + s + "'");
}

/// Schedule knobs for the joint dense kernel. Zero block size means the
/// whole extent (no tiling in that dimension).
struct KernelConfig {
    int block_m = 0;
    int block_n = 0;
    int block_k = 0;
    LoopOrder loop_order = LoopOrder::MNK;
    int unroll = 1;             // {1, 2, 4, 8}
    int vector_width_hint = 1;  // {1, 4, 8}; strip width of the k loop
    int threads = 1;

    static KernelConfig naive() { return {}; }

    std::string describe() const {
        return "bm" + std::to_string(block_m) + "_bn" + std::to_string(block_n) + "_bk" +
               std::to_string(block_k) + "_" + to_string(loop_order) + "_u" +
               std::to_string(unroll) + "_v" + std::to_string(vector_width_hint) + "_t" +
               std::to_string(threads);
    }
};

inline void validate_config(const KernelConfig& c, std::int64_t m, std::int64_t n,
                            std::int64_t k) {
    auto block_ok = [](int b, std::int64_t dim) { return b == 0 || (b > 0 && b <= dim); };
    if (!block_ok(c.block_m, m) || !block_ok(c.block_n, n) || !block_ok(c.block_k, k))
        throw InvalidConfig("block size out of range for problem " + std::to_string(m) + "x" +
                            std::to_string(n) + "x" + std::to_string(k));
    if (c.unroll != 1 && c.unroll != 2 && c.unroll != 4 && c.unroll != 8)
        throw InvalidConfig("unroll must be one of {1,2,4,8}");
    if (c.vector_width_hint != 1 && c.vector_width_hint != 4 && c.vector_width_hint != 8)
        throw InvalidConfig("vector_width_hint must be one of {1,4,8}");
    if (c.threads < 1) throw InvalidConfig("threads must be >= 1");
}

namespace detail {

// One m-tile x n-tile of the joint dense computation. Accumulates into the
// caller's tile accumulators so k-blocking can revisit the tile. Loops run
// in cfg order; the k strip is widened by vector_width_hint with separate
// partial accumulators (fixed combine order, so results are deterministic
// for a given config).
struct TileArgs {
    const float* xm;
    const float* xe;
    const float* wm;
    const float* we;
    std::int64_t d_in;
    double* acc_m;  // tile_m x tile_n
    double* acc_v;
    std::int64_t tile_n_stride;
};

inline void joint_dense_tile(const TileArgs& a, const KernelConfig& cfg, std::int64_t m0,
                             std::int64_t m1, std::int64_t n0, std::int64_t n1, std::int64_t k0,
                             std::int64_t k1) {
    const int vw = cfg.vector_width_hint;
    const int step = cfg.unroll * vw;

    auto body_mn = [&](std::int64_t i, std::int64_t j, std::int64_t kb0, std::int64_t kb1) {
        const float* xrm = a.xm + i * a.d_in;
        const float* xre = a.xe + i * a.d_in;
        const float* wrm = a.wm + j * a.d_in;
        const float* wre = a.we + j * a.d_in;
        double pm[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        double pv[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::int64_t k = kb0;
        for (; k + step <= kb1; k += step) {
            for (int u = 0; u < step; ++u) {
                const int lane = u % vw;
                const double p = static_cast<double>(wrm[k + u]) * xrm[k + u];
                pm[lane] += p;
                pv[lane] += static_cast<double>(wre[k + u]) * xre[k + u] - p * p;
            }
        }
        for (; k < kb1; ++k) {
            const double p = static_cast<double>(wrm[k]) * xrm[k];
            pm[0] += p;
            pv[0] += static_cast<double>(wre[k]) * xre[k] - p * p;
        }
        double sm = 0.0, sv = 0.0;
        for (int lane = 0; lane < vw; ++lane) {
            sm += pm[lane];
            sv += pv[lane];
        }
        const std::int64_t ai = (i - m0) * a.tile_n_stride + (j - n0);
        a.acc_m[ai] += sm;
        a.acc_v[ai] += sv;
    };

    // When k is not innermost it advances in chunks of `step`, revisiting the
    // tile accumulators (rank-update style). Per output element the k order
    // stays ascending either way.
    const std::int64_t kchunk = std::max<std::int64_t>(1, step);
    switch (cfg.loop_order) {
        case LoopOrder::MNK:
            for (std::int64_t i = m0; i < m1; ++i)
                for (std::int64_t j = n0; j < n1; ++j) body_mn(i, j, k0, k1);
            break;
        case LoopOrder::NMK:
            for (std::int64_t j = n0; j < n1; ++j)
                for (std::int64_t i = m0; i < m1; ++i) body_mn(i, j, k0, k1);
            break;
        case LoopOrder::MKN:
            for (std::int64_t i = m0; i < m1; ++i)
                for (std::int64_t kc = k0; kc < k1; kc += kchunk)
                    for (std::int64_t j = n0; j < n1; ++j)
                        body_mn(i, j, kc, std::min(k1, kc + kchunk));
            break;
        case LoopOrder::NKM:
            for (std::int64_t j = n0; j < n1; ++j)
                for (std::int64_t kc = k0; kc < k1; kc += kchunk)
                    for (std::int64_t i = m0; i < m1; ++i)
                        body_mn(i, j, kc, std::min(k1, kc + kchunk));
            break;
        case LoopOrder::KMN:
            for (std::int64_t kc = k0; kc < k1; kc += kchunk)
                for (std::int64_t i = m0; i < m1; ++i)
                    for (std::int64_t j = n0; j < n1; ++j)
                        body_mn(i, j, kc, std::min(k1, kc + kchunk));
            break;
        case LoopOrder::KNM:
            for (std::int64_t kc = k0; kc < k1; kc += kchunk)
                for (std::int64_t j = n0; j < n1; ++j)
                    for (std::int64_t i = m0; i < m1; ++i)
                        body_mn(i, j, kc, std::min(k1, kc + kchunk));
            break;
    }
}

}  // namespace detail

/// Schedule-parameterized joint dense operator. Contract identical to
/// ops::dense; every config agrees with it within 1e-5 relative, and a
/// fixed config gives bit-identical results for any thread count (each
/// output element is owned by exactly one thread, with a fixed k order).
inline GaussianTensor dense_kernel(const GaussianTensor& x, const GaussianWeights& w,
                                   const KernelConfig& cfg,
                                   MomentKind out_kind = MomentKind::MeanVariance) {
    if (x.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense_kernel expects me2 activations");
    if (w.kind != MomentKind::MeanSecondRawMoment)
        throw RepresentationMismatch("dense_kernel expects me2 weights");
    pfp::detail::check_dense_shapes(x.shape, w);
    const std::int64_t m_dim = x.shape[0], k_dim = x.shape[1], n_dim = w.shape[0];
    validate_config(cfg, m_dim, n_dim, k_dim);

    const std::int64_t bm = cfg.block_m == 0 ? m_dim : cfg.block_m;
    const std::int64_t bn = cfg.block_n == 0 ? n_dim : cfg.block_n;
    const std::int64_t bk = cfg.block_k == 0 ? k_dim : cfg.block_k;
    const std::int64_t tiles_m = (m_dim + bm - 1) / bm;
    const std::int64_t tiles_n = (n_dim + bn - 1) / bn;
    const std::int64_t tile_count = tiles_m * tiles_n;

    GaussianTensor out({m_dim, n_dim}, out_kind);

    auto worker = [&](int tid, int nthreads) {
        std::vector<double> acc_m(static_cast<std::size_t>(bm * bn));
        std::vector<double> acc_v(static_cast<std::size_t>(bm * bn));
        detail::TileArgs args{x.mean.data(), x.spread.data(), w.mean.data(),
                              w.spread.data(), k_dim,          acc_m.data(),
                              acc_v.data(),   bn};
        for (std::int64_t t = tid; t < tile_count; t += nthreads) {
            const std::int64_t m0 = (t / tiles_n) * bm;
            const std::int64_t n0 = (t % tiles_n) * bn;
            const std::int64_t m1 = std::min(m_dim, m0 + bm);
            const std::int64_t n1 = std::min(n_dim, n0 + bn);
            std::fill(acc_m.begin(), acc_m.end(), 0.0);
            std::fill(acc_v.begin(), acc_v.end(), 0.0);
            for (std::int64_t kb = 0; kb < k_dim; kb += bk)
                detail::joint_dense_tile(args, cfg, m0, m1, n0, n1, kb,
                                         std::min(k_dim, kb + bk));
            for (std::int64_t i = m0; i < m1; ++i)
                for (std::int64_t j = n0; j < n1; ++j) {
                    double m = acc_m[(i - m0) * bn + (j - n0)];
                    double v = acc_v[(i - m0) * bn + (j - n0)];
                    pfp::detail::bias_mean_var(w.bias, j, m, v);
                    pfp::detail::store_moments(m, v, out_kind, out.mean[i * n_dim + j],
                                          out.spread[i * n_dim + j]);
                }
        }
    };

    const int nthreads = static_cast<int>(
        std::min<std::int64_t>(cfg.threads, std::max<std::int64_t>(1, tile_count)));
    if (nthreads <= 1) {
        worker(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t, nthreads);
        for (auto& th : pool) th.join();
    }
    return out;
}

inline double now_ns() {
    return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                   std::chrono::steady_clock::now().time_since_epoch())
                                   .count());
}

/// Median latency of fn() over `reps` runs after `warmups` untimed runs.
template <typename Fn>
inline double time_median_ns(Fn&& fn, int reps, int warmups = 2) {
    for (int i = 0; i < warmups; ++i) fn();
    std::vector<double> t(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const double t0 = now_ns();
        fn();
        t[static_cast<std::size_t>(i)] = now_ns() - t0;
    }
    std::sort(t.begin(), t.end());
    const std::size_t n = t.size();
    return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

struct TuneTrial {
    KernelConfig config;
    double median_ns = 0.0;
};

struct TuneReport {
    std::int64_t batch = 0, d_in = 0, d_out = 0;
    int repetitions = 0;
    std::vector<TuneTrial> trials;  // trial 0 is the naive baseline
    KernelConfig best;
    double best_ns = 0.0;
    double naive_ns = 0.0;
    double speedup = 0.0;  // naive_ns / best_ns
};

namespace detail {

inline bool outputs_close(const GaussianTensor& a, const GaussianTensor& b, double rel) {
    if (a.mean.size() != b.mean.size()) return false;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double scale_m = std::max({1.0, std::fabs((double)a.mean[i]), std::fabs((double)b.mean[i])});
        if (std::fabs((double)a.mean[i] - b.mean[i]) > rel * scale_m) return false;
        const double scale_s =
            std::max({1.0, std::fabs((double)a.spread[i]), std::fabs((double)b.spread[i])});
        if (std::fabs((double)a.spread[i] - b.spread[i]) > rel * scale_s) return false;
    }
    return true;
}

inline KernelConfig random_config(std::uint64_t seed, std::uint64_t trial, std::int64_t m,
                                  std::int64_t n, std::int64_t k, int max_threads) {
    auto pick = [&](std::uint64_t slot, std::uint32_t count) {
        return rng::uniform_index_at(seed, static_cast<std::uint32_t>(trial), 0x7u, slot, count);
    };
    auto pick_block = [&](std::uint64_t slot, std::int64_t dim) {
        static constexpr int menu[5] = {0, 8, 16, 32, 64};
        int b = menu[pick(slot, 5)];
        if (b > dim) b = 0;
        return b;
    };
    KernelConfig c;
    c.block_m = pick_block(0, m);
    c.block_n = pick_block(1, n);
    c.block_k = pick_block(2, k);
    c.loop_order = static_cast<LoopOrder>(pick(3, 6));
    static constexpr int unrolls[4] = {1, 2, 4, 8};
    static constexpr int widths[3] = {1, 4, 8};
    c.unroll = unrolls[pick(4, 4)];
    c.vector_width_hint = widths[pick(5, 3)];
    c.threads = 1 + static_cast<int>(pick(6, static_cast<std::uint32_t>(max_threads)));
    return c;
}

}  // namespace detail

/// Random search over the schedule menu. The naive config is measured
/// first (baseline and candidate), then `budget` random candidates; each
/// candidate is checked against ops::dense before it is timed.
inline TuneReport tune_dense(std::int64_t batch, std::int64_t d_in, std::int64_t d_out,
                             int budget, std::uint64_t seed, int repetitions = 7,
                             int max_threads = 0) {
    if (budget < 1) throw InvalidConfig("budget must be >= 1");
    if (repetitions < 5) throw InvalidConfig("repetitions must be >= 5");
    if (max_threads <= 0)
        max_threads = std::max(1u, std::thread::hardware_concurrency());

    // Fixed random problem instance (moments in U[0,1], valid me2).
    GaussianTensor x({batch, d_in}, MomentKind::MeanSecondRawMoment);
    for (std::size_t i = 0; i < x.mean.size(); ++i) {
        const double mu = rng::uniform_at(seed, 1, 0x10u, i, 0.0, 1.0);
        const double var = rng::uniform_at(seed, 2, 0x11u, i, 0.0, 1.0);
        x.mean[i] = static_cast<float>(mu);
        x.spread[i] = static_cast<float>(mu * mu + var);
    }
    GaussianWeights w;
    w.shape = {d_out, d_in};
    w.kind = MomentKind::MeanSecondRawMoment;
    w.mean.resize(static_cast<std::size_t>(d_out * d_in));
    w.spread.resize(w.mean.size());
    for (std::size_t i = 0; i < w.mean.size(); ++i) {
        const double mu = rng::uniform_at(seed, 3, 0x12u, i, -1.0, 1.0);
        const double var = rng::uniform_at(seed, 4, 0x13u, i, 0.0, 0.1);
        w.mean[i] = static_cast<float>(mu);
        w.spread[i] = static_cast<float>(mu * mu + var);
    }
    const GaussianTensor reference = dense(x, w, MomentKind::MeanVariance);

    TuneReport report;
    report.batch = batch;
    report.d_in = d_in;
    report.d_out = d_out;
    report.repetitions = repetitions;

    auto measure = [&](const KernelConfig& cfg) {
        return time_median_ns(
            [&] { (void)dense_kernel(x, w, cfg, MomentKind::MeanVariance); }, repetitions);
    };

    const KernelConfig naive = KernelConfig::naive();
    report.naive_ns = measure(naive);
    report.trials.push_back({naive, report.naive_ns});
    report.best = naive;
    report.best_ns = report.naive_ns;

    for (int t = 0; t < budget; ++t) {
        const KernelConfig cand = detail::random_config(seed, static_cast<std::uint64_t>(t),
                                                        batch, d_out, d_in, max_threads);
        // Correctness before speed: never time an unverified schedule.
        const GaussianTensor got = dense_kernel(x, w, cand, MomentKind::MeanVariance);
        if (!detail::outputs_close(got, reference, 1e-5))
            throw InvalidConfig("schedule " + cand.describe() + " failed equivalence check");
        const double ns = measure(cand);
        report.trials.push_back({cand, ns});
        if (ns < report.best_ns) {
            report.best_ns = ns;
            report.best = cand;
        }
    }
    report.speedup = report.naive_ns / report.best_ns;
    return report;
}

}  // namespace pfp::kernels
