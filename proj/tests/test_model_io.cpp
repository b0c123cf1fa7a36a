#include <catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pfp/model_io.hpp"
#include "test_util.hpp"

using pfp::MomentKind;
using pfp::ModelGraph;
namespace io = pfp::io;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Hand-built single-layer container with an arbitrary spread encoding.
std::string craft_container(const std::string& encoding, const std::vector<float>& spread_raw,
                            std::uint64_t blob_trim = 0) {
    const std::vector<float> mean = {0.5f, -0.25f};

    json manifest;
    manifest["class_count"] = 2;
    manifest["input_shape"] = {1};
    json jw;
    jw["shape"] = {2, 1};
    jw["mean"] = 0;
    jw["spread"] = 1;
    jw["spread_encoding"] = encoding;
    jw["bias"] = {{"mode", "none"}};
    manifest["layers"] = json::array({json{{"type", "dense_first"},
                                           {"out_kind", "mv"},
                                           {"weights", jw}}});
    manifest["tensors"] =
        json::array({json{{"name", "layer0.mean"}, {"shape", {2, 1}}, {"offset", 0},
                          {"byte_len", 8}},
                     json{{"name", "layer0.spread"}, {"shape", {2, 1}}, {"offset", 8},
                          {"byte_len", 8}}});
    const std::string m = manifest.dump();

    std::string bytes;
    bytes.append("PFPMODEL", 8);
    const std::uint32_t version = 1;
    bytes.append(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t mlen = m.size();
    bytes.append(reinterpret_cast<const char*>(&mlen), 8);
    bytes += m;
    bytes.append(reinterpret_cast<const char*>(mean.data()), 8);
    bytes.append(reinterpret_cast<const char*>(spread_raw.data()), 8);
    if (blob_trim > 0) bytes.resize(bytes.size() - blob_trim);
    const std::uint32_t crc =
        io::crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    bytes.append(reinterpret_cast<const char*>(&crc), 4);
    return bytes;
}

}  // namespace

TEST_CASE("save/load round trip reproduces every buffer bit-exactly") {
    const auto g = pfp::synth_lenet(123);
    const std::string bytes = io::save_model_bytes(g);
    const ModelGraph back = io::load_model_bytes(bytes);

    REQUIRE(back.layers.size() == g.layers.size());
    CHECK(back.input_shape == g.input_shape);
    CHECK(back.class_count == g.class_count);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const auto* a = std::get_if<pfp::Conv2dLayer>(&g.layers[i]);
        const auto* b = std::get_if<pfp::Conv2dLayer>(&back.layers[i]);
        REQUIRE((a == nullptr) == (b == nullptr));
        if (a && b) {
            CHECK(a->weights.mean == b->weights.mean);
            CHECK(a->weights.spread == b->weights.spread);
            CHECK(a->weights.bias.mean == b->weights.bias.mean);
            CHECK(a->weights.bias.variance == b->weights.bias.variance);
            CHECK(a->stride == b->stride);
            CHECK(a->padding == b->padding);
        }
        if (auto* da = std::get_if<pfp::DenseLayer>(&g.layers[i])) {
            const auto* db = std::get_if<pfp::DenseLayer>(&back.layers[i]);
            REQUIRE(db != nullptr);
            CHECK(da->weights.mean == db->weights.mean);
            CHECK(da->weights.spread == db->weights.spread);
            CHECK(da->weights.kind == MomentKind::MeanSecondRawMoment);
        }
    }

    // A second save of the reloaded graph is byte-identical.
    CHECK(io::save_model_bytes(back) == bytes);
}

TEST_CASE("two saves of the same graph are byte-identical") {
    const auto g = pfp::synth_mlp({12, 7, 3}, 55);
    CHECK(io::save_model_bytes(g) == io::save_model_bytes(g));
}

TEST_CASE("save_model rejects a contract-violating graph") {
    auto g = pfp::synth_lenet(4);
    g.layers.erase(g.layers.begin() + 2);  // open the relu->maxpool contract
    CHECK_THROWS_AS(io::save_model_bytes(g), pfp::ContractError);
}

TEST_CASE("spread encodings decode to variance on load") {
    SECTION("log_stddev: s = 0 decodes to unit variance") {
        const auto bytes = craft_container("log_stddev", {0.0f, 0.0f});
        const auto g = io::load_model_bytes(bytes);
        const auto& w = std::get<pfp::DenseFirstLayer>(g.layers[0]).weights;
        CHECK(w.kind == MomentKind::MeanVariance);
        CHECK(w.spread[0] == Catch::Approx(1.0f));
        CHECK(w.spread[1] == Catch::Approx(1.0f));
    }
    SECTION("log_stddev: s = ln 2 decodes to variance 4") {
        const float s = std::log(2.0f);
        const auto g = io::load_model_bytes(craft_container("log_stddev", {s, s}));
        const auto& w = std::get<pfp::DenseFirstLayer>(g.layers[0]).weights;
        CHECK(w.spread[0] == Catch::Approx(4.0f).epsilon(1e-5));
    }
    SECTION("stddev squares into variance") {
        const auto g = io::load_model_bytes(craft_container("stddev", {3.0f, 0.5f}));
        const auto& w = std::get<pfp::DenseFirstLayer>(g.layers[0]).weights;
        CHECK(w.spread[0] == 9.0f);
        CHECK(w.spread[1] == 0.25f);
    }
    SECTION("second_raw_moment subtracts mu^2") {
        // mean = {0.5, -0.25}: E2 = 1.25 -> var = 1.0; E2 = 0.0625 -> var = 0.
        const auto g =
            io::load_model_bytes(craft_container("second_raw_moment", {1.25f, 0.0625f}));
        const auto& w = std::get<pfp::DenseFirstLayer>(g.layers[0]).weights;
        CHECK(w.spread[0] == Catch::Approx(1.0f));
        CHECK(w.spread[1] == Catch::Approx(0.0f).margin(1e-7));
    }
    SECTION("unknown encoding is a FormatError") {
        CHECK_THROWS_AS(io::load_model_bytes(craft_container("precision", {1.0f, 1.0f})),
                        pfp::FormatError);
    }
}

TEST_CASE("truncated tensor blob names the tensor") {
    const auto bytes = craft_container("variance", {1.0f, 1.0f}, /*blob_trim=*/4);
    try {
        (void)io::load_model_bytes(bytes);
        FAIL("expected FormatError");
    } catch (const pfp::FormatError& e) {
        CHECK(std::string(e.what()).find("layer0.spread") != std::string::npos);
    }
}

TEST_CASE("corrupting bytes raises ChecksumError or FormatError") {
    const auto g = pfp::synth_mlp({4, 3, 2}, 9);
    std::string bytes = io::save_model_bytes(g);
    // A sample of positions: magic, version, manifest, blobs, crc.
    for (std::size_t pos :
         {std::size_t{0}, std::size_t{9}, std::size_t{25}, bytes.size() / 2, bytes.size() - 2}) {
        std::string corrupted = bytes;
        corrupted[pos] = static_cast<char>(corrupted[pos] ^ 0x5A);
        CHECK_THROWS_AS(io::load_model_bytes(corrupted), pfp::Error);
        try {
            (void)io::load_model_bytes(corrupted);
        } catch (const pfp::ChecksumError&) {
        } catch (const pfp::FormatError&) {
        } catch (...) {
            FAIL("corruption at position " << pos << " threw the wrong error type");
        }
    }
    CHECK_THROWS_AS(io::load_model_bytes("PFPM"), pfp::FormatError);
}

TEST_CASE("load_model propagates through files") {
    namespace fs = std::filesystem;
    const auto g = pfp::synth_mlp({6, 4, 2}, 77);
    const auto dir = fs::temp_directory_path() / "pfp_io_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.pfpm").string();
    io::save_model(g, path);
    const auto back = io::load_model(path);
    CHECK(io::save_model_bytes(back) == io::save_model_bytes(g));
    CHECK(read_file(path) == io::save_model_bytes(g));
    fs::remove_all(dir);
}

TEST_CASE("golden containers load and re-save byte-identically") {
    namespace fs = std::filesystem;
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(PFP_GOLDEN_DIR)) {
        if (entry.path().extension() != ".pfpm") continue;
        ++seen;
        const std::string bytes = read_file(entry.path().string());
        const ModelGraph g = io::load_model_bytes(bytes);
        CHECK(io::save_model_bytes(g) == bytes);
    }
    CHECK(seen >= 2);
}

TEST_CASE("input blob round trip and CSV parsing") {
    pfp::Tensor t({2, 3});
    t.data = {1.5f, -2.25f, 0.0f, 3.75f, 42.0f, -0.125f};
    std::stringstream ss;
    io::save_input_blob(t, ss);
    const auto back = io::load_input_auto(ss);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);

    std::stringstream csv("1.5,2.5\n-3,4\n");
    const auto c = io::load_input_auto(csv);
    CHECK(c.shape == std::vector<std::int64_t>{2, 2});
    CHECK(c.data == std::vector<float>{1.5f, 2.5f, -3.0f, 4.0f});

    std::stringstream ragged("1,2\n3\n");
    CHECK_THROWS_AS(io::load_input_csv(ragged), pfp::FormatError);

    std::stringstream truncated("{\"shape\": [4, 4]}\nxx");
    CHECK_THROWS_AS(io::load_input_blob(truncated), pfp::FormatError);
}

TEST_CASE("kernel config JSON round trip") {
    pfp::kernels::KernelConfig c;
    c.block_m = 8;
    c.block_n = 32;
    c.block_k = 64;
    c.loop_order = pfp::kernels::LoopOrder::NKM;
    c.unroll = 4;
    c.vector_width_hint = 8;
    c.threads = 2;
    const auto j = io::kernel_config_to_json(c);
    const auto back = io::kernel_config_from_json(j);
    CHECK(back.block_m == c.block_m);
    CHECK(back.block_n == c.block_n);
    CHECK(back.block_k == c.block_k);
    CHECK(back.loop_order == c.loop_order);
    CHECK(back.unroll == c.unroll);
    CHECK(back.vector_width_hint == c.vector_width_hint);
    CHECK(back.threads == c.threads);
}

TEST_CASE("crc32 matches the standard test vector") {
    const char* s = "123456789";
    CHECK(io::crc32(reinterpret_cast<const unsigned char*>(s), 9) == 0xCBF43926u);
}
