#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfp/kernels.hpp"
#include "pfp/model.hpp"

namespace pfp::io {

static_assert(std::endian::native == std::endian::little,
              "pfpm containers are little-endian; big-endian hosts are not supported");

using json = nlohmann::json;

/// How a spread buffer is encoded in a container tensor. Covers the common
/// exports of probabilistic training frameworks; everything decodes to a
/// nonnegative variance.
enum class SpreadEncoding { Variance, Stddev, LogStddev, SecondRawMoment };

inline const char* to_string(SpreadEncoding e) {
    switch (e) {
        case SpreadEncoding::Variance: return "variance";
        case SpreadEncoding::Stddev: return "stddev";
        case SpreadEncoding::LogStddev: return "log_stddev";
        case SpreadEncoding::SecondRawMoment: return "second_raw_moment";
    }
    return "?";
}

inline SpreadEncoding spread_encoding_from_string(const std::string& s) {
    for (SpreadEncoding e : {SpreadEncoding::Variance, SpreadEncoding::Stddev,
                             SpreadEncoding::LogStddev, SpreadEncoding::SecondRawMoment})
        if (s == to_string(e)) return e;
    throw FormatError("unknown spread encoding '" + s + "'");
}

/// CRC-32 (IEEE, reflected) over a byte range.
inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

namespace detail {

constexpr char kMagic[8] = {'P', 'F', 'P', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

struct TensorEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset = 0;  // into the blob section
    std::uint64_t byte_len = 0;
};

struct Writer {
    json tensors = json::array();
    std::string blobs;

    int add(const std::string& name, const std::vector<std::int64_t>& shape,
            const std::vector<float>& data) {
        json t;
        t["name"] = name;
        t["shape"] = shape;
        t["offset"] = blobs.size();
        t["byte_len"] = data.size() * sizeof(float);
        tensors.push_back(t);
        const auto* raw = reinterpret_cast<const char*>(data.data());
        blobs.append(raw, data.size() * sizeof(float));
        return static_cast<int>(tensors.size()) - 1;
    }
};

inline json weights_to_json(Writer& w, const GaussianWeights& gw, const std::string& prefix) {
    json j;
    j["shape"] = gw.shape;
    j["mean"] = w.add(prefix + ".mean", gw.shape, gw.mean);
    j["spread"] = w.add(prefix + ".spread", gw.shape, gw.spread);
    j["spread_encoding"] = to_string(gw.kind == MomentKind::MeanVariance
                                         ? SpreadEncoding::Variance
                                         : SpreadEncoding::SecondRawMoment);
    switch (gw.bias.kind) {
        case BiasKind::None: j["bias"] = {{"mode", "none"}}; break;
        case BiasKind::Deterministic:
            j["bias"] = {{"mode", "deterministic"},
                         {"mean", w.add(prefix + ".bias_mean", {gw.out_dim()}, gw.bias.mean)}};
            break;
        case BiasKind::Probabilistic:
            j["bias"] = {
                {"mode", "probabilistic"},
                {"mean", w.add(prefix + ".bias_mean", {gw.out_dim()}, gw.bias.mean)},
                {"variance", w.add(prefix + ".bias_variance", {gw.out_dim()}, gw.bias.variance)},
                {"variance_encoding", "variance"}};
            break;
    }
    return j;
}

struct Reader {
    const std::string* bytes = nullptr;
    std::size_t blob_begin = 0;
    std::size_t blob_end = 0;
    std::vector<TensorEntry> entries;

    std::vector<float> fetch(int index) const {
        if (index < 0 || index >= static_cast<int>(entries.size()))
            throw FormatError("tensor index " + std::to_string(index) + " out of range");
        const TensorEntry& e = entries[static_cast<std::size_t>(index)];
        const std::size_t begin = blob_begin + e.offset;
        if (e.byte_len % sizeof(float) != 0 || begin + e.byte_len > blob_end)
            throw FormatError("truncated tensor blob for tensor '" + e.name + "'");
        if (static_cast<std::int64_t>(e.byte_len / sizeof(float)) != numel(e.shape))
            throw FormatError("tensor '" + e.name + "' byte length does not match its shape");
        std::vector<float> out(e.byte_len / sizeof(float));
        std::memcpy(out.data(), bytes->data() + begin, e.byte_len);
        return out;
    }

    const TensorEntry& entry(int index) const {
        return entries.at(static_cast<std::size_t>(index));
    }
};

inline std::vector<float> decode_spread_to_variance(std::vector<float> raw, SpreadEncoding enc,
                                                    const std::vector<float>& mean) {
    switch (enc) {
        case SpreadEncoding::Variance: break;
        case SpreadEncoding::Stddev:
            for (auto& s : raw) s = s * s;
            break;
        case SpreadEncoding::LogStddev:
            for (auto& s : raw) {
                const double sd = std::exp(static_cast<double>(s));
                s = static_cast<float>(sd * sd);
            }
            break;
        case SpreadEncoding::SecondRawMoment:
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const double m = mean[i];
                raw[i] =
                    static_cast<float>(std::max(0.0, static_cast<double>(raw[i]) - m * m));
            }
            break;
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (!(raw[i] >= 0.0f))
            throw FormatError("spread tensor decodes to a negative variance at index " +
                              std::to_string(i));
    return raw;
}

inline GaussianWeights weights_from_json(const Reader& r, const json& j,
                                         MomentKind required_kind) {
    GaussianWeights w;
    w.shape = j.at("shape").get<std::vector<std::int64_t>>();
    w.mean = r.fetch(j.at("mean").get<int>());
    const auto enc = spread_encoding_from_string(j.at("spread_encoding").get<std::string>());
    std::vector<float> variance =
        decode_spread_to_variance(r.fetch(j.at("spread").get<int>()), enc, w.mean);
    if (w.mean.size() != variance.size() ||
        static_cast<std::int64_t>(w.mean.size()) != numel(w.shape))
        throw FormatError("weight tensor sizes do not match the declared shape");

    w.kind = required_kind;
    if (required_kind == MomentKind::MeanVariance) {
        w.spread = std::move(variance);
    } else {
        w.spread.resize(variance.size());
        for (std::size_t i = 0; i < variance.size(); ++i) {
            const double m = w.mean[i];
            w.spread[i] = static_cast<float>(m * m + static_cast<double>(variance[i]));
        }
    }

    const json& bias = j.at("bias");
    const std::string mode = bias.at("mode").get<std::string>();
    if (mode == "none") {
        w.bias = BiasMode::none();
    } else if (mode == "deterministic") {
        w.bias = BiasMode::deterministic(r.fetch(bias.at("mean").get<int>()));
    } else if (mode == "probabilistic") {
        std::vector<float> bmean = r.fetch(bias.at("mean").get<int>());
        SpreadEncoding benc = SpreadEncoding::Variance;
        if (bias.contains("variance_encoding"))
            benc = spread_encoding_from_string(bias.at("variance_encoding").get<std::string>());
        std::vector<float> bvar =
            decode_spread_to_variance(r.fetch(bias.at("variance").get<int>()), benc, bmean);
        w.bias = BiasMode::probabilistic(std::move(bmean), std::move(bvar));
    } else {
        throw FormatError("unknown bias mode '" + mode + "'");
    }
    return w;
}

}  // namespace detail

/// Serializes a validated graph into the canonical container byte string.
/// Two saves of the same graph are byte-identical.
inline std::string save_model_bytes(const ModelGraph& g) {
    validate_graph(g);

    detail::Writer w;
    json layers = json::array();
    int li = 0;
    for (const LayerSpec& layer : g.layers) {
        const std::string prefix = "layer" + std::to_string(li++);
        json j;
        j["type"] = layer_type_name(layer);
        if (auto* d = std::get_if<DenseFirstLayer>(&layer)) {
            j["out_kind"] = to_string(d->out_kind);
            j["weights"] = detail::weights_to_json(w, d->weights, prefix);
        } else if (auto* d2 = std::get_if<DenseLayer>(&layer)) {
            j["out_kind"] = to_string(d2->out_kind);
            j["weights"] = detail::weights_to_json(w, d2->weights, prefix);
        } else if (auto* c = std::get_if<Conv2dFirstLayer>(&layer)) {
            j["out_kind"] = to_string(c->out_kind);
            j["stride"] = c->stride;
            j["padding"] = c->padding;
            j["weights"] = detail::weights_to_json(w, c->weights, prefix);
        } else if (auto* c2 = std::get_if<Conv2dLayer>(&layer)) {
            j["out_kind"] = to_string(c2->out_kind);
            j["stride"] = c2->stride;
            j["padding"] = c2->padding;
            j["weights"] = detail::weights_to_json(w, c2->weights, prefix);
        } else if (auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            j["k"] = p->k;
            j["vectorized"] = p->vectorized;
        } else if (auto* cv = std::get_if<ConvertLayer>(&layer)) {
            j["target"] = to_string(cv->target);
        }
        layers.push_back(j);
    }

    json manifest;
    manifest["class_count"] = g.class_count;
    manifest["input_shape"] = g.input_shape;
    manifest["layers"] = layers;
    manifest["tensors"] = w.tensors;
    const std::string mbytes = manifest.dump();

    std::string out;
    out.append(detail::kMagic, sizeof(detail::kMagic));
    auto put_u32 = [&out](std::uint32_t v) {
        out.append(reinterpret_cast<const char*>(&v), 4);
    };
    auto put_u64 = [&out](std::uint64_t v) {
        out.append(reinterpret_cast<const char*>(&v), 8);
    };
    put_u32(detail::kVersion);
    put_u64(mbytes.size());
    out += mbytes;
    out += w.blobs;
    put_u32(crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
    return out;
}

/// Parses and fully validates a container. Checks, in order: size, CRC32,
/// magic, version, manifest JSON, tensor table bounds, spread decoding,
/// then the graph contract.
inline ModelGraph load_model_bytes(const std::string& bytes) {
    constexpr std::size_t kHeader = 8 + 4 + 8;
    if (bytes.size() < kHeader + 4) throw FormatError("container too small");

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    const std::uint32_t actual_crc =
        crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 4);
    if (stored_crc != actual_crc)
        throw ChecksumError("CRC32 mismatch: container is corrupted or truncated");

    if (std::memcmp(bytes.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
        throw FormatError("bad magic: not a pfpm container");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + 8, 4);
    if (version != detail::kVersion)
        throw FormatError("unsupported container version " + std::to_string(version));
    std::uint64_t manifest_len;
    std::memcpy(&manifest_len, bytes.data() + 12, 8);
    if (kHeader + manifest_len + 4 > bytes.size())
        throw FormatError("declared manifest length exceeds the container");

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + kHeader,
                               bytes.begin() + static_cast<std::ptrdiff_t>(kHeader + manifest_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }

    detail::Reader r;
    r.bytes = &bytes;
    r.blob_begin = kHeader + manifest_len;
    r.blob_end = bytes.size() - 4;

    ModelGraph g;
    try {
        g.class_count = manifest.at("class_count").get<std::int64_t>();
        g.input_shape = manifest.at("input_shape").get<std::vector<std::int64_t>>();
        for (const json& t : manifest.at("tensors")) {
            detail::TensorEntry e;
            e.name = t.at("name").get<std::string>();
            e.shape = t.at("shape").get<std::vector<std::int64_t>>();
            e.offset = t.at("offset").get<std::uint64_t>();
            e.byte_len = t.at("byte_len").get<std::uint64_t>();
            r.entries.push_back(std::move(e));
        }

        for (const json& j : manifest.at("layers")) {
            const std::string type = j.at("type").get<std::string>();
            if (type == "dense_first") {
                DenseFirstLayer l;
                l.out_kind = moment_kind_from_string(j.at("out_kind").get<std::string>());
                l.weights =
                    detail::weights_from_json(r, j.at("weights"), MomentKind::MeanVariance);
                g.layers.emplace_back(std::move(l));
            } else if (type == "dense") {
                DenseLayer l;
                l.out_kind = moment_kind_from_string(j.at("out_kind").get<std::string>());
                l.weights = detail::weights_from_json(r, j.at("weights"),
                                                      MomentKind::MeanSecondRawMoment);
                g.layers.emplace_back(std::move(l));
            } else if (type == "conv2d_first") {
                Conv2dFirstLayer l;
                l.out_kind = moment_kind_from_string(j.at("out_kind").get<std::string>());
                l.stride = j.at("stride").get<int>();
                l.padding = j.at("padding").get<int>();
                l.weights =
                    detail::weights_from_json(r, j.at("weights"), MomentKind::MeanVariance);
                g.layers.emplace_back(std::move(l));
            } else if (type == "conv2d") {
                Conv2dLayer l;
                l.out_kind = moment_kind_from_string(j.at("out_kind").get<std::string>());
                l.stride = j.at("stride").get<int>();
                l.padding = j.at("padding").get<int>();
                l.weights = detail::weights_from_json(r, j.at("weights"),
                                                      MomentKind::MeanSecondRawMoment);
                g.layers.emplace_back(std::move(l));
            } else if (type == "relu") {
                g.layers.emplace_back(ReluLayer{});
            } else if (type == "maxpool") {
                g.layers.emplace_back(
                    MaxPoolLayer{j.at("k").get<int>(), j.at("vectorized").get<bool>()});
            } else if (type == "flatten") {
                g.layers.emplace_back(FlattenLayer{});
            } else if (type == "convert") {
                g.layers.emplace_back(
                    ConvertLayer{moment_kind_from_string(j.at("target").get<std::string>())});
            } else {
                throw FormatError("unknown layer type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }

    validate_graph(g);
    return g;
}

inline void save_model(const ModelGraph& g, const std::string& path) {
    const std::string bytes = save_model_bytes(g);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("short write to '" + path + "'");
}

inline ModelGraph load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return load_model_bytes(ss.str());
}

// ---------------------------------------------------------------------------
// Input batches: raw little-endian f32 blob behind a single-line JSON header
// ({"shape": [N, ...]}\n), or CSV with one item per row for small tests.

inline void save_input_blob(const Tensor& t, std::ostream& os) {
    json header;
    header["shape"] = t.shape;
    os << header.dump() << '\n';
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

inline Tensor load_input_blob(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("input blob: missing JSON header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError(std::string("input blob header is not valid JSON: ") + e.what());
    }
    Tensor t;
    t.shape = header.at("shape").get<std::vector<std::int64_t>>();
    t.data.resize(static_cast<std::size_t>(numel(t.shape)));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(is.gcount()) != t.data.size() * sizeof(float))
        throw FormatError("input blob shorter than its declared shape");
    return t;
}

inline Tensor load_input_csv(std::istream& is) {
    std::vector<float> data;
    std::int64_t rows = 0, cols = -1;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::int64_t c = 0;
        while (std::getline(ls, cell, ',')) {
            data.push_back(std::stof(cell));
            ++c;
        }
        if (cols < 0) cols = c;
        if (c != cols) throw FormatError("CSV input rows have inconsistent widths");
        ++rows;
    }
    if (rows == 0) throw FormatError("CSV input is empty");
    Tensor t;
    t.shape = {rows, cols};
    t.data = std::move(data);
    return t;
}

/// Reads an input batch, sniffing the format from the first byte.
inline Tensor load_input_auto(std::istream& is) {
    const int first = is.peek();
    if (first == '{') return load_input_blob(is);
    return load_input_csv(is);
}

// ---------------------------------------------------------------------------
// Kernel config JSON (the `tune` CLI prints this; `--kernel-config` reads it).

inline json kernel_config_to_json(const kernels::KernelConfig& c) {
    json j;
    j["block_m"] = c.block_m;
    j["block_n"] = c.block_n;
    j["block_k"] = c.block_k;
    j["loop_order"] = kernels::to_string(c.loop_order);
    j["unroll"] = c.unroll;
    j["vector_width_hint"] = c.vector_width_hint;
    j["threads"] = c.threads;
    return j;
}

inline kernels::KernelConfig kernel_config_from_json(const json& j) {
    kernels::KernelConfig c;
    c.block_m = j.at("block_m").get<int>();
    c.block_n = j.at("block_n").get<int>();
    c.block_k = j.at("block_k").get<int>();
    c.loop_order = kernels::loop_order_from_string(j.at("loop_order").get<std::string>());
    c.unroll = j.at("unroll").get<int>();
    c.vector_width_hint = j.at("vector_width_hint").get<int>();
    c.threads = j.at("threads").get<int>();
    return c;
}

}  // namespace pfp::io
