#include <doctest.h>

#include "mxt/model.hpp"
#include "mxt/ops.hpp"
#include "support.hpp"

using namespace mxt;

namespace {

ModelConfig tiny(std::size_t base = 8) {
    ModelConfig cfg;
    cfg.base_channels = base;
    cfg.hm_counts = {1, 1, 1, 1, 1, 1, 1};
    cfg.state_dim = 4;
    cfg.pooled_spatial = 2;
    return cfg;
}

// Per-layer parameter arithmetic, written out independently of the model code.
std::size_t expected_parameters(const ModelConfig& m) {
    auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
    auto module = [&](std::size_t c) {
        std::size_t n = 0;
        if (m.enable_srsa) n += 2 * c + conv(c, 3 * c, 1) + 3 * c * 9 + 3 * c + c * 9 + c;
        if (m.enable_mamba) {
            const std::size_t d = c * m.expand_ratio, s = m.state_dim;
            n += 2 * c + (c * d + d) + (d * m.conv1d_kernel + d) + (d * s + d * d + d + 2 * d * s) +
                 (m.ssm_skip ? d : 0) + (c * d + d) + (d * c + c);
        }
        if (m.ffn != FfnKind::none) {
            const auto h = static_cast<std::size_t>(std::lround(m.ffn_expansion * double(c)));
            n += 2 * c + conv(c, 2 * h, 1) + 2 * h * 9 + 2 * h + conv(h, c, 1);
        }
        return n;
    };
    const std::size_t c = m.base_channels;
    const std::size_t widths[7] = {c, 2 * c, 4 * c, 8 * c, 4 * c, 2 * c, c};
    std::size_t total = conv(4, c, 3) + conv(c, 3, 3);
    for (std::size_t i = 0; i < 7; ++i) total += m.hm_counts[i] * module(widths[i]);
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t w = c << k;
        total += conv(w, 2 * w, 3);      // down
        total += conv(2 * w, w, 3);      // up
        total += conv(2 * w, w, 1);      // skip fusion
    }
    return total;
}

struct Inputs {
    Tensor<double> masked, mask;
};

Inputs random_inputs(std::size_t b, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    auto gt = test::random_tensor({b, 3, h, w}, rng, 0, 1);
    std::vector<double> m(b * h * w);
    for (auto& v : m) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    Tensor<double> mask({b, 1, h, w}, m);
    return {mul(gt, affine(mask, -1.0, 1.0)), mask};
}

}  // namespace

TEST_CASE("output keeps the input size and the channel schedule doubles") {
    auto cfg = tiny();
    const auto model = MxtModel<double>::init(cfg, 1);
    const auto in = random_inputs(2, 16, 24, 2);
    ForwardTrace trace;
    NoGradGuard guard;
    const auto out = model.forward(in.masked, in.mask, &trace);
    CHECK(out.shape() == Shape{2, 3, 16, 24});
    CHECK(trace.downsamples == 3);
    CHECK(trace.upsamples == 3);
    CHECK(trace.block_channels == std::vector<std::size_t>{8, 16, 32, 64, 32, 16, 8});
    for (double v : out.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("sizes not divisible by eight ask for padding") {
    const auto model = MxtModel<double>::init(tiny(), 1);
    const auto in = random_inputs(1, 12, 16, 3);
    try {
        model.forward(in.masked, in.mask);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("pad") != std::string::npos);
    }
    const auto ok = random_inputs(1, 16, 16, 3);
    CHECK_THROWS_AS(model.forward(ok.masked, Tensor<double>::zeros({1, 1, 8, 16})), DimensionError);
}

TEST_CASE("default configuration has forty hybrid modules") {
    ModelConfig cfg;
    std::size_t n = 0;
    for (auto c : cfg.hm_counts) n += c;
    CHECK(n == 40);
    CHECK(cfg.hm_counts == std::array<std::size_t, 7>{4, 6, 6, 8, 6, 6, 4});
    CHECK(cfg.base_channels == 16);
}

TEST_CASE("parameter count matches per-layer arithmetic") {
    for (char row : {'a', 'b', 'c', 'd', 'e'}) {
        auto cfg = ablation_config(row, tiny());
        auto model = MxtModel<double>::init(cfg, 3);
        CAPTURE(row);
        CHECK(model.parameter_count() == expected_parameters(cfg));
    }
    auto cfg = tiny();
    cfg.hm_counts = {2, 1, 3, 1, 1, 2, 1};
    cfg.ssm_skip = true;
    auto model = MxtModel<double>::init(cfg, 4);
    CHECK(model.parameter_count() == expected_parameters(cfg));
}

TEST_CASE("ablation rows enable the right sub-blocks") {
    const auto a = ablation_config('a'), b = ablation_config('b'), c = ablation_config('c');
    const auto d = ablation_config('d'), e = ablation_config('e');
    CHECK((!a.enable_mamba && !a.enable_srsa && a.ffn == FfnKind::none));
    CHECK((b.enable_mamba && !b.enable_srsa && b.ffn == FfnKind::gdfn));
    CHECK((!c.enable_mamba && c.enable_srsa && c.ffn == FfnKind::gdfn));
    CHECK((d.enable_mamba && d.enable_srsa && d.ffn == FfnKind::gdfn));
    CHECK((e.enable_mamba && e.enable_srsa && e.ffn == FfnKind::cbfn));
    CHECK_THROWS_AS(ablation_config('f'), ContractError);
}

TEST_CASE("enabling a sub-block strictly adds parameters") {
    auto count = [](ModelConfig cfg) { return MxtModel<double>::init(cfg, 5).parameter_count(); };
    auto base = tiny();
    base.enable_mamba = base.enable_srsa = false;
    base.ffn = FfnKind::none;
    const auto none = count(base);
    auto m = base;
    m.enable_mamba = true;
    auto s = base;
    s.enable_srsa = true;
    auto f = base;
    f.ffn = FfnKind::gdfn;
    CHECK(count(m) > none);
    CHECK(count(s) > none);
    CHECK(count(f) > none);
    auto cb = f;
    cb.ffn = FfnKind::cbfn;
    CHECK(count(cb) == count(f));
}

TEST_CASE("hybrid module with nothing enabled is the identity") {
    auto cfg = tiny();
    cfg.enable_mamba = cfg.enable_srsa = false;
    cfg.ffn = FfnKind::none;
    Rng rng(6);
    const auto hm = HybridModule<double>::init(cfg, 8, rng);
    const auto f = test::random_tensor({1, 8, 8, 8}, rng);
    CHECK(test::bit_equal(hm.forward(f), f));
}

TEST_CASE("hybrid module preserves shape") {
    Rng rng(7);
    const auto hm = HybridModule<double>::init(tiny(), 16, rng);
    CHECK(hm.forward(test::random_tensor({1, 16, 8, 8}, rng)).shape() == Shape{1, 16, 8, 8});
}

TEST_CASE("untrained model is finite for a hundred seeds") {
    auto cfg = tiny(4);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto model = MxtModel<float>::init(cfg, seed);
        Rng rng(seed);
        auto gt = test::random_tensor<float>({1, 3, 8, 8}, rng, 0, 1);
        const auto mask = Tensor<float>::zeros({1, 1, 8, 8});
        NoGradGuard guard;
        const auto out = model.forward(gt, mask);
        bool finite = true;
        for (float v : out.values()) finite = finite && std::isfinite(v);
        CHECK(finite);
    }
}

TEST_CASE("same seed and input give bit-identical output") {
    const auto in = random_inputs(1, 16, 16, 8);
    NoGradGuard guard;
    const auto a = MxtModel<double>::init(tiny(), 9).forward(in.masked, in.mask);
    const auto b = MxtModel<double>::init(tiny(), 9).forward(in.masked, in.mask);
    const auto c = MxtModel<double>::init(tiny(), 10).forward(in.masked, in.mask);
    CHECK(test::bit_equal(a, b));
    CHECK_FALSE(test::bit_equal(a, c));
}

TEST_CASE("composite keeps known pixels and takes holes from the output") {
    Tensor<double> out({1, 3, 1, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    Tensor<double> known({1, 3, 1, 2}, {0.9, 0.0, 0.8, 0.0, 0.7, 0.0});
    Tensor<double> mask({1, 1, 1, 2}, {0, 1});
    const auto c = composite(out, known, mask);
    const std::vector<double> want{0.9, 0.2, 0.8, 0.4, 0.7, 0.6};
    CHECK(std::equal(want.begin(), want.end(), c.values().begin()));
}

TEST_CASE("tile blend weights sum to one") {
    for (auto [side, tile, overlap] : std::vector<std::array<std::size_t, 3>>{{128, 64, 16}, {96, 32, 8}, {64, 64, 0},
                                                                            {72, 32, 8}, {64, 16, 0}}) {
        const auto sums = blend_weight_sums(side, side, tile, overlap);
        double worst = 0;
        for (double s : sums) worst = std::max(worst, std::abs(s - 1.0));
        CAPTURE(side);
        CAPTURE(tile);
        CHECK(worst < 1e-12);
    }
    CHECK_THROWS_AS(tile_plan(64, 64, 20, 0), ContractError);
    CHECK_THROWS_AS(tile_plan(64, 64, 32, 16), ContractError);
}

TEST_CASE("tile plan covers the image with edge-aligned tiles") {
    const auto plan = tile_plan(100, 72, 32, 8);
    std::vector<int> covered(100 * 72, 0);
    for (const auto& t : plan) {
        CHECK(t.y + 32 <= 100);
        CHECK(t.x + 32 <= 72);
        for (std::size_t y = t.y; y < t.y + 32; ++y)
            for (std::size_t x = t.x; x < t.x + 32; ++x) covered[y * 72 + x] = 1;
    }
    CHECK(std::count(covered.begin(), covered.end(), 0) == 0);
}

TEST_CASE("tiled inference falls back to one pass when the tile is too big") {
    const auto model = MxtModel<double>::init(tiny(), 11);
    const auto in = random_inputs(1, 16, 16, 12);
    const auto img = reshape(in.masked, {3, 16, 16}), msk = reshape(in.mask, {1, 16, 16});
    NoGradGuard guard;
    const auto whole = reshape(model.forward(in.masked, in.mask), {3, 16, 16});
    CHECK(test::bit_equal(tiled_inference(model, img, msk, 32, 8), whole));
}

TEST_CASE("aligned tiles without overlap equal per-tile inference") {
    const auto model = MxtModel<double>::init(tiny(), 13);
    const auto in = random_inputs(1, 16, 32, 14);
    const auto img = reshape(in.masked, {3, 16, 32}), msk = reshape(in.mask, {1, 16, 32});
    NoGradGuard guard;
    const auto tiled = tiled_inference(model, img, msk, 16, 0);
    for (std::size_t x0 : {0, 16}) {
        const auto ti = reshape(slice(img, {0, 0, x0}, {3, 16, x0 + 16}), {1, 3, 16, 16});
        const auto tm = reshape(slice(msk, {0, 0, x0}, {1, 16, x0 + 16}), {1, 1, 16, 16});
        const auto ref = reshape(model.forward(ti, tm), {3, 16, 16});
        const auto got = slice(tiled, {0, 0, x0}, {3, 16, x0 + 16});
        CHECK(test::bit_equal(got.detach(), ref));
    }
}

TEST_CASE("configuration keys round trip through set") {
    ModelConfig a = tiny();
    a.ffn = FfnKind::gdfn;
    a.qk_scale = QkScale::none;
    ModelConfig b;
    for (const auto& [k, v] : a.entries()) CHECK(b.set(k.substr(6), v));
    CHECK(a == b);
    CHECK_FALSE(b.set("no_such_key", "1"));
}
