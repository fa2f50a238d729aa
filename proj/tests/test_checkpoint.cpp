#include <doctest.h>

#include <filesystem>

#include "mxt/checkpoint.hpp"
#include "support.hpp"

using namespace mxt;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
    ModelConfig cfg;
    cfg.base_channels = 8;
    cfg.hm_counts = {1, 1, 1, 1, 1, 1, 1};
    cfg.state_dim = 4;
    return cfg;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("mxt_test_ckpt_" + name);
}

}  // namespace

TEST_CASE("FNV-1a of known strings") {
    const std::string a = "a";
    CHECK(fnv1a(reinterpret_cast<const std::uint8_t*>(a.data()), 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a(nullptr, 0) == 0xcbf29ce484222325ULL);
}

TEST_CASE("save, load, save gives identical bytes") {
    for (int width : {4, 8}) {
        std::vector<std::uint8_t> first, second;
        if (width == 4) {
            auto m = MxtModel<float>::init(tiny(), 1);
            first = encode_checkpoint(model_checkpoint(m));
            auto loaded = load_model<float>(decode_checkpoint(first));
            second = encode_checkpoint(model_checkpoint(loaded));
        } else {
            auto m = MxtModel<double>::init(tiny(), 1);
            first = encode_checkpoint(model_checkpoint(m));
            auto loaded = load_model<double>(decode_checkpoint(first));
            second = encode_checkpoint(model_checkpoint(loaded));
        }
        CHECK(first == second);
    }
}

TEST_CASE("loaded weights are bit-identical and the config survives") {
    auto cfg = tiny();
    cfg.ffn = FfnKind::gdfn;
    cfg.heads = 2;
    auto m = MxtModel<double>::init(cfg, 2);
    const auto path = temp_path("roundtrip");
    write_checkpoint(path, model_checkpoint(m));
    auto loaded = load_model<double>(read_checkpoint(path));
    CHECK(loaded.config() == cfg);
    auto a = m.named_parameters();
    auto b = loaded.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(test::bit_equal(a[i].second, b[i].second));
    }
    fs::remove(path);
}

TEST_CASE("truncated or altered files are rejected as corrupt") {
    auto m = MxtModel<float>::init(tiny(), 3);
    const auto bytes = encode_checkpoint(model_checkpoint(m));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
        CHECK_THROWS_AS(decode_checkpoint(part), CorruptionError);
    }
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(flipped), CorruptionError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), CorruptionError);
}

TEST_CASE("a different format version is a schema error") {
    auto m = MxtModel<float>::init(tiny(), 4);
    auto bytes = encode_checkpoint(model_checkpoint(m));
    bytes[8] = 2;  // version field follows the 8-byte magic
    const auto sum = fnv1a(bytes.data(), bytes.size() - 8);
    for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = static_cast<std::uint8_t>(sum >> (8 * i));
    CHECK_THROWS_AS(decode_checkpoint(bytes), SchemaError);
}

TEST_CASE("unknown or missing tensors are schema errors") {
    auto m = MxtModel<float>::init(tiny(), 5);
    auto file = model_checkpoint(m);
    auto extra = file;
    extra.tensors.push_back(pack_tensor("bogus.weight", Tensor<float>::zeros({2})));
    CHECK_THROWS_AS(load_model<float>(extra), SchemaError);
    auto missing = file;
    missing.tensors.pop_back();
    CHECK_THROWS_AS(load_model<float>(missing), SchemaError);
    auto ignored = file;
    ignored.tensors.push_back(pack_tensor("state.whatever", Tensor<float>::zeros({2})));
    CHECK_NOTHROW(load_model<float>(ignored));
    auto wrong_width = file;
    CHECK_THROWS_AS(load_model<double>(wrong_width), SchemaError);
    auto bad_key = file;
    bad_key.config.emplace_back("model.not_a_key", "1");
    CHECK_THROWS_AS(model_config_from(bad_key), SchemaError);
}

TEST_CASE("unpacking into a different shape is a schema error") {
    const auto t = pack_tensor("x", Tensor<double>::zeros({2, 3}));
    auto dst = Tensor<double>::zeros({3, 2});
    CHECK_THROWS_AS(unpack_tensor(t, 8, dst), SchemaError);
}
