#include <doctest.h>
#include <omp.h>

#include "mxt/kernels/kernels.hpp"
#include "support.hpp"

using namespace mxt;
namespace k = mxt::kernels;

namespace {

std::vector<double> buffer(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    return v;
}

struct ThreadCount {
    explicit ThreadCount(int n) : previous(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadCount() { omp_set_num_threads(previous); }
    int previous;
};

std::vector<k::Conv2dGeometry> geometries(bool depthwise) {
    std::vector<k::Conv2dGeometry> out;
    for (std::size_t stride : {1, 2})
        for (std::size_t kernel : {1, 3})
            for (std::size_t side : {5, 8, 13}) {
                k::Conv2dGeometry g;
                g.batch = 2;
                g.in_channels = 3;
                g.out_channels = depthwise ? 3 : 4;
                g.height = side;
                g.width = side + 2;
                g.kernel_h = g.kernel_w = kernel;
                g.stride = stride;
                g.padding = kernel / 2;
                out.push_back(g);
            }
    return out;
}

}  // namespace

TEST_CASE("parallel gemm equals the serial reference") {
    ThreadCount threads(4);
    Rng rng(1);
    for (bool ta : {false, true})
        for (bool tb : {false, true})
            for (bool acc : {false, true}) {
                const std::size_t m = 37, n = 29, kk = 19;
                const auto a = buffer(m * kk, rng), b = buffer(kk * n, rng);
                auto c1 = buffer(m * n, rng);
                auto c2 = c1;
                k::gemm(ta, tb, m, n, kk, a.data(), b.data(), c1.data(), acc);
                k::serial::gemm(ta, tb, m, n, kk, a.data(), b.data(), c2.data(), acc);
                CHECK(test::max_abs_diff(c1, c2) < 1e-12);
            }
}

TEST_CASE("serial gemm matches a direct dot product") {
    Rng rng(2);
    const std::size_t m = 3, n = 4, kk = 5;
    const auto a = buffer(m * kk, rng), b = buffer(n * kk, rng);
    std::vector<double> c(m * n);
    k::serial::gemm(false, true, m, n, kk, a.data(), b.data(), c.data(), false);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t q = 0; q < kk; ++q) s += a[i * kk + q] * b[j * kk + q];
            CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
        }
}

TEST_CASE("parallel convolutions equal the serial reference") {
    ThreadCount threads(4);
    Rng rng(3);
    for (bool depthwise : {false, true}) {
        for (const auto& g : geometries(depthwise)) {
            CAPTURE(depthwise);
            CAPTURE(g.height);
            CAPTURE(g.stride);
            CAPTURE(g.kernel_h);
            const std::size_t wsize = depthwise ? g.in_channels * g.kernel_h * g.kernel_w
                                                : g.out_channels * g.in_channels * g.kernel_h * g.kernel_w;
            const auto x = buffer(g.batch * g.in_channels * g.height * g.width, rng);
            const auto w = buffer(wsize, rng), bias = buffer(g.out_channels, rng);
            const std::size_t ysize = g.batch * g.out_channels * g.out_height() * g.out_width();
            std::vector<double> y1(ysize), y2(ysize);
            if (depthwise) {
                k::depthwise_conv2d_forward(g, x.data(), w.data(), bias.data(), y1.data());
                k::serial::depthwise_conv2d_forward(g, x.data(), w.data(), bias.data(), y2.data());
            } else {
                k::conv2d_forward(g, x.data(), w.data(), bias.data(), y1.data());
                k::serial::conv2d_forward(g, x.data(), w.data(), bias.data(), y2.data());
            }
            CHECK(test::max_abs_diff(y1, y2) < 1e-12);

            const auto dy = buffer(ysize, rng);
            std::vector<double> dx1(x.size(), 0.25), dw1(wsize, 0.5), db1(g.out_channels, -1.0);
            auto dx2 = dx1, dw2 = dw1, db2 = db1;
            if (depthwise) {
                k::depthwise_conv2d_backward(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
                k::serial::depthwise_conv2d_backward(g, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(),
                                                     db2.data());
            } else {
                k::conv2d_backward(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
                k::serial::conv2d_backward(g, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(), db2.data());
            }
            CHECK(test::max_abs_diff(dx1, dx2) < 1e-12);
            CHECK(test::max_abs_diff(dw1, dw2) < 1e-12);
            CHECK(test::max_abs_diff(db1, db2) < 1e-12);
        }
    }
}

TEST_CASE("serial convolution matches a direct sum") {
    Rng rng(4);
    k::Conv2dGeometry g;
    g.batch = 1;
    g.in_channels = 2;
    g.out_channels = 2;
    g.height = g.width = 5;
    g.kernel_h = g.kernel_w = 3;
    g.stride = 2;
    g.padding = 1;
    const auto x = buffer(2 * 25, rng), w = buffer(2 * 2 * 9, rng), b = buffer(2, rng);
    std::vector<double> y(2 * 9);
    k::serial::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double s = b[o];
                for (std::size_t c = 0; c < 2; ++c)
                    for (int u = 0; u < 3; ++u)
                        for (int v = 0; v < 3; ++v) {
                            const int yy = int(i) * 2 - 1 + u, xx = int(j) * 2 - 1 + v;
                            if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
                            s += w[((o * 2 + c) * 3 + u) * 3 + v] * x[c * 25 + yy * 5 + xx];
                        }
                CHECK(y[(o * 3 + i) * 3 + j] == doctest::Approx(s).epsilon(1e-14));
            }
}
