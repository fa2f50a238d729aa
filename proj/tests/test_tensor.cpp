#include <doctest.h>

#include <set>

#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"
#include "support.hpp"

using namespace mxt;
using mxt::test::expect_gradients;
using mxt::test::random_tensor;
using T = Tensor<double>;

TEST_CASE("broadcast add matches explicit expansion") {
    T a({2, 3}, {1, 2, 3, 4, 5, 6});
    T b({3}, {10, 20, 30});
    const auto c = add(a, b);
    CHECK(c.shape() == Shape{2, 3});
    const std::vector<double> want{11, 22, 33, 14, 25, 36};
    CHECK(std::equal(want.begin(), want.end(), c.values().begin()));
    CHECK(broadcast_shape({4, 1, 3}, {5, 1}) == Shape{4, 5, 3});
    CHECK_THROWS_AS(add(a, T({2}, {1, 2})), DimensionError);
}

TEST_CASE("matmul matches a triple loop") {
    Rng rng(1);
    const auto a = random_tensor({2, 3, 5}, rng), b = random_tensor({2, 5, 4}, rng);
    const auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 4});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                double s = 0;
                for (std::size_t k = 0; k < 5; ++k) s += a.values()[n * 15 + i * 5 + k] * b.values()[n * 20 + k * 4 + j];
                CHECK(c.values()[n * 12 + i * 4 + j] == doctest::Approx(s).epsilon(1e-13));
            }
}

TEST_CASE("backward of sum of squares is 2x and leaves accumulate") {
    T x({3}, {1, -2, 0.5}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[1] == -4.0);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[1] == -8.0);
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
    backward(sum(mul(x, x)));
    CHECK(x.grad()[1] == -4.0);
}

TEST_CASE("backward needs a scalar root") {
    T x({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
}

TEST_CASE("no-grad guard records nothing") {
    T x({2}, {1, 2}, true);
    NoGradGuard guard;
    const auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK_FALSE(grad_enabled());
}

TEST_CASE("tape lists every node after its inputs") {
    Rng rng(2);
    auto x = random_tensor({2, 3}, rng);
    x.set_requires_grad(true);
    const auto y = sum(softmax(add(mul(x, x), x), 1));
    const auto tape = Tape<double>::record(y);
    std::set<const detail::Node<double>*> seen;
    for (const auto* n : tape.nodes) {
        for (const auto& in : n->inputs) {
            if (in->requires_grad && in->backward) CHECK(seen.count(in.get()) == 1);
        }
        seen.insert(n);
    }
    CHECK(tape.nodes.back() == y.node().get());
}

TEST_CASE("softmax is stable for large logits and sums to one") {
    T x({2, 3}, {1000, 1001, 1002, -5, 0, 5});
    const auto s = softmax(x, 1);
    for (std::size_t r = 0; r < 2; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(std::isfinite(s.values()[r * 3 + c]));
            total += s.values()[r * 3 + c];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(s.values()[0] == doctest::Approx(std::exp(-2.0) / (1 + std::exp(-1.0) + std::exp(-2.0))));
}

TEST_CASE("reshape and permute keep values") {
    T x({2, 3}, {0, 1, 2, 3, 4, 5});
    const auto p = permute(x, {1, 0});
    const std::vector<double> want{0, 3, 1, 4, 2, 5};
    CHECK(std::equal(want.begin(), want.end(), p.values().begin()));
    CHECK_THROWS_AS(reshape(x, {4}), DimensionError);
}

TEST_CASE("adaptive pooling averages exact windows") {
    T x({1, 1, 4, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
    const auto p = nn::adaptive_avg_pool2d(x, 2);
    const std::vector<double> want{2.5, 4.5, 10.5, 12.5};
    CHECK(std::equal(want.begin(), want.end(), p.values().begin()));
}

TEST_CASE("causal conv1d never looks ahead") {
    Rng rng(3);
    auto x = random_tensor({1, 6, 2}, rng);
    const auto w = random_tensor({2, 3}, rng), b = random_tensor({2}, rng);
    const auto y0 = nn::causal_depthwise_conv1d(x, w, b);
    auto v = x.mutable_values();
    v[5 * 2] += 1.0;  // perturb the last timestep
    const auto y1 = nn::causal_depthwise_conv1d(x, w, b);
    for (std::size_t i = 0; i < 10; ++i) CHECK(y0.values()[i] == y1.values()[i]);
}

TEST_CASE("elementwise gradients") {
    Rng rng(4);
    const auto x = random_tensor({3, 4}, rng, -2, 2);
    const auto pos = random_tensor({3, 4}, rng, 0.5, 2);
    const auto y = random_tensor({3, 4}, rng, 0.5, 2);
    expect_gradients("silu", [&] { return sum(silu(x)); }, {{"x", x}});
    expect_gradients("gelu", [&] { return sum(gelu(x)); }, {{"x", x}});
    expect_gradients("softplus", [&] { return sum(softplus(x)); }, {{"x", x}});
    expect_gradients("sigmoid", [&] { return sum(sigmoid(x)); }, {{"x", x}});
    expect_gradients("tanh", [&] { return sum(tanh(x)); }, {{"x", x}});
    expect_gradients("exp", [&] { return sum(exp(x)); }, {{"x", x}});
    expect_gradients("log", [&] { return sum(log(pos)); }, {{"pos", pos}});
    expect_gradients("sqrt", [&] { return sum(sqrt(pos)); }, {{"pos", pos}});
    expect_gradients("div", [&] { return sum(div(x, y)); }, {{"x", x}, {"y", y}});
    expect_gradients("leaky", [&] { return sum(mul(leaky_relu(x, 0.2), x)); }, {{"x", x}});
}

TEST_CASE("structural op gradients") {
    Rng rng(5);
    const auto x = random_tensor({2, 3, 4}, rng);
    const auto w = random_tensor({2, 3, 4}, rng);
    auto weighted = [&](const T& t) {
        Rng probe(99);
        return sum(mul(t, random_tensor(t.shape(), probe)));
    };
    expect_gradients("reduce", [&] { return sum(mul(mean(x, {1}, true), max(x, {2}, true))); }, {{"x", x}});
    expect_gradients("softmax", [&] { return sum(mul(softmax(x, 1), w)); }, {{"x", x}});
    expect_gradients("permute", [&] { return weighted(permute(x, {2, 0, 1})); }, {{"x", x}});
    expect_gradients("concat_split", [&] {
        const auto parts = split(concat(std::vector<Tensor<double>>{x, w}, 1), {2, 4}, 1);
        return add(weighted(parts[0]), sum(mul(parts[1], parts[1])));
    }, {{"x", x}, {"w", w}});
    expect_gradients("pad_slice", [&] {
        return weighted(slice(pad(x, {0, 1, 1}, {0, 0, 2}, 0.5), {0, 0, 1}, {2, 3, 6}));
    }, {{"x", x}});
    expect_gradients("matmul", [&] { return weighted(matmul(x, transpose(w, 1, 2))); }, {{"x", x}, {"w", w}});
}

TEST_CASE("network op gradients") {
    Rng rng(6);
    const auto x = random_tensor({2, 4, 6, 6}, rng);
    const auto wd = random_tensor({3, 4, 3, 3}, rng), bd = random_tensor({3}, rng);
    const auto wg = random_tensor({4, 1, 3, 3}, rng), bg = random_tensor({4}, rng);
    const auto gamma = random_tensor({4}, rng, 0.5, 1.5), beta = random_tensor({4}, rng);
    const auto seq = random_tensor({2, 5, 4}, rng);
    const auto wc = random_tensor({4, 3}, rng), wl = random_tensor({4, 3}, rng), bl = random_tensor({3}, rng);
    Rng probe(7);
    const auto r = random_tensor({2, 3, 3, 3}, probe);
    expect_gradients("conv_stride2", [&] { return sum(mul(nn::conv2d(x, wd, bd, 2, 1), r)); },
                     {{"x", x}, {"w", wd}, {"b", bd}});
    expect_gradients("depthwise", [&] { return sum(mul(nn::conv2d(x, wg, bg, 1, 1, 4), x)); },
                     {{"x", x}, {"w", wg}, {"b", bg}});
    expect_gradients("layer_norm_channels", [&] {
        return sum(mul(nn::layer_norm_channels(x, gamma, beta), x));
    }, {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    expect_gradients("layer_norm_last", [&] {
        return sum(mul(nn::layer_norm_last(seq, gamma, beta), seq));
    }, {{"seq", seq}, {"gamma", gamma}, {"beta", beta}});
    expect_gradients("pool_upsample", [&] {
        return sum(mul(nn::upsample_nearest2x(nn::adaptive_avg_pool2d(x, 4)), nn::adaptive_avg_pool2d(x, 8)));
    }, {{"x", x}});
    expect_gradients("causal_conv1d", [&] {
        return sum(mul(nn::causal_depthwise_conv1d(seq, wc, beta), seq));
    }, {{"seq", seq}, {"w", wc}, {"b", beta}});
    expect_gradients("linear", [&] { return sum(silu(nn::linear(seq, wl, bl))); },
                     {{"seq", seq}, {"w", wl}, {"b", bl}});
}
