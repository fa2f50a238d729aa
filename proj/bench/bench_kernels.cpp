#include <benchmark/benchmark.h>

#include <vector>

#include "mxt/blocks.hpp"
#include "mxt/kernels/kernels.hpp"
#include "mxt/ops.hpp"
#include "mxt/rng.hpp"
#include "mxt/scan_bench.hpp"

namespace {

using namespace mxt;
namespace k = mxt::kernels;

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
        } else {
            k::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);

k::Conv2dGeometry conv_geometry(std::size_t side, std::size_t channels) {
    k::Conv2dGeometry g;
    g.batch = 4;
    g.in_channels = g.out_channels = channels;
    g.height = g.width = side;
    g.kernel_h = g.kernel_w = 3;
    g.padding = 1;
    return g;
}

template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), 16);
    const auto x = random_buffer(g.batch * g.in_channels * g.height * g.width, 3);
    const auto w = random_buffer(g.out_channels * g.in_channels * 9, 4);
    std::vector<float> y(g.batch * g.out_channels * g.out_height() * g.out_width());
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
        } else {
            k::serial::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
        }
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Conv2d<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_Conv2d<true>)->Arg(32)->Arg(64);

template <bool Parallel>
void BM_DepthwiseBackward(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)), 32);
    const std::size_t n = g.batch * g.in_channels * g.height * g.width;
    const auto x = random_buffer(n, 5), dy = random_buffer(n, 6), w = random_buffer(g.in_channels * 9, 7);
    std::vector<float> dx(n), dw(g.in_channels * 9), db(g.in_channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::depthwise_conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
        } else {
            k::serial::depthwise_conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                                 db.data());
        }
        benchmark::DoNotOptimize(dx.data());
    }
}
BENCHMARK(BM_DepthwiseBackward<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_DepthwiseBackward<true>)->Arg(32)->Arg(64);

void BM_ScanSequential(benchmark::State& state) {
    ScanInputs<double> in(1, static_cast<std::size_t>(state.range(0)), 16, 16, 11);
    std::vector<double> y(in.x.size());
    for (auto _ : state) {
        ssm::scan_sequential(in.problem, std::span<double>(y));
        benchmark::DoNotOptimize(y.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(2)->Range(128, 2048)->Complexity(benchmark::oN);

void BM_ScanChunked(benchmark::State& state) {
    ScanInputs<double> in(1, static_cast<std::size_t>(state.range(0)), 16, 16, 11);
    std::vector<double> y(in.x.size());
    for (auto _ : state) {
        ssm::scan_chunked(in.problem, 64, std::span<double>(y));
        benchmark::DoNotOptimize(y.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanChunked)->RangeMultiplier(2)->Range(128, 2048)->Complexity(benchmark::oN);

// Pooled keys keep attention linear in the pixel count.
void BM_SrsaForward(benchmark::State& state) {
    const std::size_t side = static_cast<std::size_t>(state.range(0));
    Rng rng(13);
    SrsaConfig cfg;
    cfg.channels = 16;
    auto block = Srsa<float>::init(cfg, rng);
    std::vector<float> v(16 * side * side);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Tensor<float> f({1, 16, side, side}, std::move(v));
    NoGradGuard guard;
    for (auto _ : state) {
        auto out = block.forward(f);
        benchmark::DoNotOptimize(out.values().data());
    }
    state.SetComplexityN(static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_SrsaForward)->Arg(16)->Arg(32)->Arg(64)->Arg(128)->Complexity(benchmark::oN);

}  // namespace

BENCHMARK_MAIN();
