// pfp: command-line front end for the probabilistic-forward-pass engine.
// Batch tool: every command reads files/stdin, writes CSV/JSON/containers,
// and exits. Randomized commands print their seed when none is given.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfp/pfp.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kDefaultSeed = 0x5EEDF00Dull;

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t seed) {
    if (opt->count() == 0) {
        std::fprintf(stderr, "# seed=%llu (default; pass --seed to override)\n",
                     static_cast<unsigned long long>(kDefaultSeed));
        return kDefaultSeed;
    }
    return seed;
}

pfp::ModelGraph read_model(const std::string& path) {
    if (path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return pfp::io::load_model_bytes(ss.str());
    }
    return pfp::io::load_model(path);
}

void write_bytes(const std::string& bytes, const std::string& out, bool force) {
    if (out.empty() || out == "-") {
        std::cout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return;
    }
    if (fs::exists(out) && !force)
        throw pfp::Error("refusing to overwrite '" + out + "' without --force");
    std::ofstream f(out, std::ios::binary);
    if (!f) throw pfp::Error("cannot open '" + out + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

pfp::Tensor read_input(const std::string& path) {
    if (path == "-") return pfp::io::load_input_auto(std::cin);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw pfp::Error("cannot open input '" + path + "'");
    return pfp::io::load_input_auto(f);
}

pfp::Tensor random_input(const pfp::ModelGraph& g, std::int64_t batch, std::uint64_t seed) {
    std::vector<std::int64_t> shape;
    shape.push_back(batch);
    for (auto d : g.input_shape) shape.push_back(d);
    pfp::Tensor x(shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = static_cast<float>(pfp::rng::uniform_at(seed, 0, 0x127u, i, -1.0, 1.0));
    return x;
}

pfp::Tensor resolve_input(const pfp::ModelGraph& g, const std::string& input_path,
                          std::int64_t batch, std::uint64_t seed) {
    if (!input_path.empty()) return read_input(input_path);
    std::fprintf(stderr, "# no --input given: random batch of %lld item(s)\n",
                 static_cast<long long>(batch));
    return random_input(g, batch, seed ^ 0xA5A5A5A5ull);
}

std::vector<std::int64_t> parse_i64_list(const std::string& csv) {
    std::vector<std::int64_t> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoll(cell));
    return out;
}

std::string metrics_csv(const pfp::uq::UncertaintyReport& r) {
    std::string out = "item,total_entropy,softmax_entropy,mutual_information\n";
    char buf[128];
    for (std::size_t n = 0; n < r.total_entropy.size(); ++n) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g,%.6g\n", n, r.total_entropy[n],
                      r.softmax_entropy[n], r.mutual_information[n]);
        out += buf;
    }
    return out;
}

std::string logits_csv(const pfp::LogitDistribution& d) {
    std::string out = "item,class,mean,variance\n";
    char buf[128];
    for (std::int64_t n = 0; n < d.items; ++n)
        for (std::int64_t k = 0; k < d.classes; ++k) {
            std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.9g\n",
                          static_cast<long long>(n), static_cast<long long>(k),
                          (double)d.mean[n * d.classes + k],
                          (double)d.variance[n * d.classes + k]);
            out += buf;
        }
    return out;
}

std::string samples_csv(const pfp::mc::SampleBatch& b) {
    std::string out = "sample,item,class,logit\n";
    char buf[128];
    for (std::int64_t s = 0; s < b.samples; ++s)
        for (std::int64_t n = 0; n < b.items; ++n)
            for (std::int64_t k = 0; k < b.classes; ++k) {
                std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.9g\n",
                              static_cast<long long>(s), static_cast<long long>(n),
                              static_cast<long long>(k), (double)b.at(s, n, k));
                out += buf;
            }
    return out;
}

pfp::mc::SampleBatch read_samples_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw pfp::Error("cannot open logits CSV '" + path + "'");
    std::string line;
    if (!std::getline(f, line) || line.rfind("sample,", 0) != 0)
        throw pfp::FormatError("logits CSV must start with a 'sample,item,class,logit' header");
    struct Row {
        std::int64_t s, n, k;
        float v;
    };
    std::vector<Row> rows;
    std::int64_t max_s = -1, max_n = -1, max_k = -1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Row r;
        char* end = nullptr;
        r.s = std::strtoll(line.c_str(), &end, 10);
        r.n = std::strtoll(end + 1, &end, 10);
        r.k = std::strtoll(end + 1, &end, 10);
        r.v = std::strtof(end + 1, nullptr);
        rows.push_back(r);
        max_s = std::max(max_s, r.s);
        max_n = std::max(max_n, r.n);
        max_k = std::max(max_k, r.k);
    }
    pfp::mc::SampleBatch b;
    b.samples = max_s + 1;
    b.items = max_n + 1;
    b.classes = max_k + 1;
    if (static_cast<std::int64_t>(rows.size()) != b.samples * b.items * b.classes)
        throw pfp::FormatError("logits CSV is not a dense [samples, items, classes] grid");
    b.logits.resize(rows.size());
    for (const Row& r : rows)
        b.logits[static_cast<std::size_t>((r.s * b.items + r.n) * b.classes + r.k)] = r.v;
    return b;
}

std::vector<float> read_metric_column(const std::string& path, const std::string& column) {
    std::ifstream f(path);
    if (!f) throw pfp::Error("cannot open metrics CSV '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw pfp::FormatError("metrics CSV is empty");
    std::vector<std::string> header;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == column) col = i;
    if (col == header.size())
        throw pfp::FormatError("column '" + column + "' not found in " + path);
    std::vector<float> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::size_t i = 0;
        float value = 0.0f;
        while (std::getline(ls, cell, ',')) {
            if (i == col) value = std::stof(cell);
            ++i;
        }
        out.push_back(value);
    }
    return out;
}

struct GlobalOpts {
    int threads = 0;
};

pfp::RunOptions run_options(const GlobalOpts& g, const std::string& kernel_config_json) {
    pfp::RunOptions opts;
    if (!kernel_config_json.empty()) {
        auto cfg = pfp::io::kernel_config_from_json(json::parse(kernel_config_json));
        if (g.threads > 0) cfg.threads = g.threads;
        opts.dense_config = cfg;
    } else if (g.threads > 0) {
        auto cfg = pfp::kernels::KernelConfig::naive();
        cfg.threads = g.threads;
        opts.dense_config = cfg;
    }
    return opts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic forward pass engine: analytic Gaussian inference, "
                 "sampling baseline, uncertainty metrics, kernel tuning"};
    app.require_subcommand(1);

    GlobalOpts global;
    app.add_option("--threads", global.threads,
                   "Worker threads for dense kernels and sampling (0 = auto)");

    // --- synth ---------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a random model fixture (.pfpm)");
    std::string synth_arch;
    std::string synth_dims = "784,100,10";
    std::uint64_t synth_seed = 0;
    std::string synth_out = "-";
    bool synth_force = false;
    synth->add_option("arch", synth_arch, "Architecture: mlp or lenet")->required();
    synth->add_option("--dims", synth_dims, "MLP layer widths, e.g. 784,100,10");
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "Output path ('-' = stdout)");
    synth->add_flag("--force", synth_force, "Overwrite an existing output file");

    // --- predict -------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "Single probabilistic forward pass -> "
                                                  "logit mean/variance CSV");
    std::string predict_model, predict_input, predict_out, predict_kcfg;
    double predict_cal = 1.0;
    std::int64_t predict_batch = 1;
    std::uint64_t predict_seed = 0;
    bool predict_force = false;
    predict->add_option("--model", predict_model, "Model container ('-' = stdin)")->required();
    predict->add_option("--input", predict_input, "Input batch (blob or CSV; '-' = stdin)");
    predict->add_option("--batch", predict_batch, "Random-input batch size when no --input");
    predict->add_option("--calibration", predict_cal, "Variance calibration factor");
    predict->add_option("--kernel-config", predict_kcfg, "Dense schedule JSON from `tune`");
    predict->add_option("--out", predict_out, "Output CSV path (default stdout)");
    predict->add_flag("--force", predict_force, "Overwrite an existing output file");
    auto* predict_seed_opt = predict->add_option("--seed", predict_seed, "RNG seed");

    // --- sample --------------------------------------------------------
    auto* sample = app.add_subcommand("sample", "Sampling baseline -> per-sample logit CSV");
    std::string sample_model, sample_input, sample_out;
    std::int64_t sample_count = 30, sample_batch = 1;
    std::uint64_t sample_seed = 0;
    bool sample_force = false;
    sample->add_option("--model", sample_model, "Model container ('-' = stdin)")->required();
    sample->add_option("--input", sample_input, "Input batch (blob or CSV)");
    sample->add_option("--batch", sample_batch, "Random-input batch size when no --input");
    sample->add_option("--samples", sample_count, "Number of weight draws");
    auto* sample_seed_opt = sample->add_option("--seed", sample_seed, "RNG seed");
    sample->add_option("--out", sample_out, "Output CSV path (default stdout)");
    sample->add_flag("--force", sample_force, "Overwrite an existing output file");

    // --- verify --------------------------------------------------------
    auto* verify = app.add_subcommand(
        "verify", "Check PFP moments against the sampling oracle (exit 2 on failure)");
    std::string verify_model, verify_input;
    std::int64_t verify_samples = 200'000, verify_batch = 4;
    std::uint64_t verify_seed = 0;
    double verify_tol = 3.0, verify_min_frac = 0.95;
    verify->add_option("--model", verify_model, "Model container ('-' = stdin)")->required();
    verify->add_option("--input", verify_input, "Input batch (blob or CSV)");
    verify->add_option("--batch", verify_batch, "Random-input batch size when no --input");
    verify->add_option("--samples", verify_samples, "Oracle sample count");
    verify->add_option("--tolerance-se", verify_tol, "Tolerance in MC standard errors");
    verify->add_option("--min-pass-fraction", verify_min_frac,
                       "Required fraction of cells within tolerance");
    auto* verify_seed_opt = verify->add_option("--seed", verify_seed, "RNG seed");

    // --- metrics -------------------------------------------------------
    auto* metrics = app.add_subcommand(
        "metrics", "Entropy decomposition CSV from logit samples or a model run");
    std::string metrics_logits, metrics_model, metrics_input, metrics_out;
    std::int64_t metrics_samples = 1024, metrics_batch = 1;
    std::uint64_t metrics_seed = 0;
    bool metrics_force = false;
    metrics->add_option("--logits", metrics_logits, "Per-sample logit CSV (from `sample`)");
    metrics->add_option("--model", metrics_model, "Model container (PFP + logit sampling)");
    metrics->add_option("--input", metrics_input, "Input batch for --model");
    metrics->add_option("--batch", metrics_batch, "Random-input batch size when no --input");
    metrics->add_option("--samples", metrics_samples, "Logit samples drawn from PFP output");
    auto* metrics_seed_opt = metrics->add_option("--seed", metrics_seed, "RNG seed");
    metrics->add_option("--out", metrics_out, "Output CSV path (default stdout)");
    metrics->add_flag("--force", metrics_force, "Overwrite an existing output file");

    // --- auroc ---------------------------------------------------------
    auto* auroc_cmd = app.add_subcommand(
        "auroc", "OOD separability from two metrics CSVs (out-domain is positive)");
    std::string auroc_in, auroc_out_file, auroc_column = "mutual_information";
    auroc_cmd->add_option("--in-domain", auroc_in, "Metrics CSV of in-domain items")
        ->required();
    auroc_cmd->add_option("--out-domain", auroc_out_file, "Metrics CSV of OOD items")
        ->required();
    auroc_cmd->add_option("--column", auroc_column, "Score column name");

    // --- bench ---------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "Latency reports (per-operator, PFP-vs-MC, "
                                              "operator shootouts)");
    std::string bench_model, bench_input, bench_operator, bench_shape = "16,16,14,14";
    std::string bench_batches = "1,10,100";
    std::int64_t bench_samples = 30, bench_batch = 10, bench_din = 784, bench_dout = 100;
    int bench_reps = 9;
    bool bench_compare_mc = false;
    std::uint64_t bench_seed = 0;
    bench->add_option("--model", bench_model, "Model container to profile per layer");
    bench->add_option("--input", bench_input, "Input batch (blob or CSV)");
    bench->add_option("--batch-sizes", bench_batches, "Mini-batch sizes for --compare-mc");
    bench->add_option("--batch", bench_batch, "Batch size (per-layer profile or dense-split)");
    bench->add_flag("--compare-mc", bench_compare_mc,
                    "End-to-end PFP vs mc_predict speedup curve");
    bench->add_option("--samples", bench_samples, "MC samples for --compare-mc");
    bench->add_option("--operator", bench_operator,
                      "Operator shootout: maxpool or dense-split");
    bench->add_option("--shape", bench_shape, "Input shape for --operator maxpool");
    bench->add_option("--din", bench_din, "Input width for --operator dense-split");
    bench->add_option("--dout", bench_dout, "Output width for --operator dense-split");
    bench->add_option("--reps", bench_reps, "Timed repetitions per measurement");
    auto* bench_seed_opt = bench->add_option("--seed", bench_seed, "RNG seed");

    // --- tune ----------------------------------------------------------
    auto* tune = app.add_subcommand("tune", "Random-search schedule tuning for the dense "
                                            "kernel");
    std::int64_t tune_batch = 10, tune_din = 784, tune_dout = 100;
    int tune_budget = 32, tune_reps = 7;
    std::uint64_t tune_seed = 0;
    tune->add_option("--batch", tune_batch, "Mini-batch size (M)");
    tune->add_option("--din", tune_din, "Input width (K)");
    tune->add_option("--dout", tune_dout, "Output width (N)");
    tune->add_option("--budget", tune_budget, "Random candidates to try");
    tune->add_option("--reps", tune_reps, "Timed repetitions per candidate (>= 5)");
    auto* tune_seed_opt = tune->add_option("--seed", tune_seed, "RNG seed");

    // --- mi-gap --------------------------------------------------------
    auto* migap = app.add_subcommand(
        "mi-gap", "Gaussian-summarization mutual-information underestimate experiment");
    std::int64_t migap_classes = 10, migap_items = 512, migap_samples = 1024;
    double migap_lambda = pfp::uq::kMiGapDefaultLambda;
    std::uint64_t migap_seed = 0;
    migap->add_option("--classes", migap_classes, "Number of classes K");
    migap->add_option("--items", migap_items, "Items N");
    migap->add_option("--samples", migap_samples, "Samples S per item");
    migap->add_option("--lambda", migap_lambda, "One-hot logit magnitude");
    auto* migap_seed_opt = migap->add_option("--seed", migap_seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const auto seed = resolve_seed(synth_seed_opt, synth_seed);
            const auto g = pfp::synth_model(synth_arch, parse_i64_list(synth_dims), seed);
            write_bytes(pfp::io::save_model_bytes(g), synth_out, synth_force);
        } else if (*predict) {
            const auto seed = resolve_seed(predict_seed_opt, predict_seed);
            auto g = read_model(predict_model);
            if (predict_cal != 1.0) g = pfp::calibrate(g, predict_cal);
            const auto x = resolve_input(g, predict_input, predict_batch, seed);
            const auto out = pfp::run_pfp(g, x, run_options(global, predict_kcfg));
            write_bytes(logits_csv(out), predict_out, predict_force);
        } else if (*sample) {
            const auto seed = resolve_seed(sample_seed_opt, sample_seed);
            const auto g = read_model(sample_model);
            const auto x = resolve_input(g, sample_input, sample_batch, seed);
            const auto batch = pfp::mc::mc_predict(g, x, sample_count, seed, global.threads);
            write_bytes(samples_csv(batch), sample_out, sample_force);
        } else if (*verify) {
            const auto seed = resolve_seed(verify_seed_opt, verify_seed);
            const auto g = read_model(verify_model);
            const auto x = resolve_input(g, verify_input, verify_batch, seed);
            const auto predicted = pfp::run_pfp(g, x);
            const auto batch =
                pfp::mc::mc_predict(g, x, verify_samples, seed, global.threads);
            const auto mom = pfp::mc::mc_moments_f64(batch);

            int total = 0, ok = 0;
            for (std::int64_t n = 0; n < batch.items; ++n)
                for (std::int64_t k = 0; k < batch.classes; ++k) {
                    const std::int64_t c = n * batch.classes + k;
                    double m4 = 0.0;
                    for (std::int64_t s = 0; s < batch.samples; ++s) {
                        const double d = batch.at(s, n, k) - mom.mean[c];
                        m4 += d * d * d * d;
                    }
                    m4 /= static_cast<double>(batch.samples);
                    const double m2n =
                        mom.variance[c] * static_cast<double>(batch.samples - 1) /
                        static_cast<double>(batch.samples);
                    const double se_mean = std::sqrt(m2n / batch.samples);
                    const double se_var =
                        std::sqrt(std::max(0.0, m4 - m2n * m2n) / batch.samples);
                    total += 2;
                    if (std::fabs(predicted.mean[c] - mom.mean[c]) <= verify_tol * se_mean)
                        ++ok;
                    if (std::fabs(predicted.variance[c] - mom.variance[c]) <=
                        verify_tol * se_var)
                        ++ok;
                }
            const double frac = total ? static_cast<double>(ok) / total : 0.0;
            std::printf("cells=%d ok=%d pass_fraction=%.4f (tolerance %.1f SE, min %.2f)\n",
                        total, ok, frac, verify_tol, verify_min_frac);
            if (frac < verify_min_frac) return 2;
        } else if (*metrics) {
            pfp::mc::SampleBatch batch;
            if (!metrics_logits.empty()) {
                batch = read_samples_csv(metrics_logits);
            } else if (!metrics_model.empty()) {
                const auto seed = resolve_seed(metrics_seed_opt, metrics_seed);
                const auto g = read_model(metrics_model);
                const auto x = resolve_input(g, metrics_input, metrics_batch, seed);
                const auto out = pfp::run_pfp(g, x);
                batch = pfp::uq::logit_sample(out, metrics_samples, seed);
            } else {
                throw pfp::Error("metrics needs --logits or --model");
            }
            write_bytes(metrics_csv(pfp::uq::uncertainty_report(batch)), metrics_out,
                        metrics_force);
        } else if (*auroc_cmd) {
            const auto in_scores = read_metric_column(auroc_in, auroc_column);
            const auto out_scores = read_metric_column(auroc_out_file, auroc_column);
            std::printf("%.12g\n", pfp::uq::auroc(in_scores, out_scores));
        } else if (*bench) {
            const auto seed = resolve_seed(bench_seed_opt, bench_seed);
            if (bench_operator == "maxpool") {
                const auto shape = parse_i64_list(bench_shape);
                const auto r = pfp::bench::bench_maxpool_k2(shape, seed, bench_reps);
                std::printf("target,operator,config,median_ns,mad_ns,fraction\n");
                std::printf("maxpool,vectorized_k2,,%.0f,0,1.0\n", r.joint_ns);
                std::printf("maxpool,generic_k2,,%.0f,0,1.0\n", r.split_ns);
                std::printf("# vectorized/generic = %.3f\n", r.joint_ns / r.split_ns);
            } else if (bench_operator == "dense-split") {
                const auto r = pfp::bench::bench_joint_vs_split(bench_batch, bench_din,
                                                                bench_dout, seed, bench_reps);
                std::printf("target,operator,config,median_ns,mad_ns,fraction\n");
                std::printf("dense,joint,,%.0f,0,1.0\n", r.joint_ns);
                std::printf("dense,split_pair,,%.0f,0,1.0\n", r.split_ns);
                std::printf("# joint/split = %.3f\n", r.joint_ns / r.split_ns);
            } else if (bench_compare_mc) {
                const auto g = read_model(bench_model);
                const auto rows = pfp::bench::bench_pfp_vs_mc(
                    g, parse_i64_list(bench_batches), bench_samples, seed, bench_reps,
                    global.threads > 0 ? global.threads : 1);
                std::fputs(pfp::bench::to_csv(rows).c_str(), stdout);
            } else {
                const auto g = read_model(bench_model);
                const auto x = resolve_input(g, bench_input, bench_batch, seed);
                const auto rows = pfp::bench::bench_model(g, x, "model", bench_reps);
                std::fputs(pfp::bench::to_csv(rows).c_str(), stdout);
            }
        } else if (*tune) {
            const auto seed = resolve_seed(tune_seed_opt, tune_seed);
            const auto report = pfp::kernels::tune_dense(tune_batch, tune_din, tune_dout,
                                                         tune_budget, seed, tune_reps,
                                                         global.threads);
            std::printf("trial,config,median_ns\n");
            for (std::size_t i = 0; i < report.trials.size(); ++i)
                std::printf("%zu,%s,%.0f\n", i, report.trials[i].config.describe().c_str(),
                            report.trials[i].median_ns);
            std::printf("# naive %.0f ns, best %.0f ns, speedup %.2fx\n", report.naive_ns,
                        report.best_ns, report.speedup);
            std::printf("%s\n", pfp::io::kernel_config_to_json(report.best).dump().c_str());
        } else if (*migap) {
            const auto seed = resolve_seed(migap_seed_opt, migap_seed);
            const auto r = pfp::uq::mi_gap_experiment(migap_classes, migap_items,
                                                      migap_samples, migap_lambda, seed);
            std::printf("mi_sampled=%.6g\nmi_gaussian=%.6g\nrelative_underestimate=%.6g\n",
                        r.mi_sampled, r.mi_gaussian, r.relative_underestimate);
        }
    } catch (const pfp::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
