#include <doctest.h>

#include <sstream>

#include "mxt/data.hpp"
#include "mxt/losses.hpp"
#include "mxt/metrics.hpp"
#include "support.hpp"

using namespace mxt;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Image img(3, h, w);
    for (auto& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

Image shifted(Image img, double d) {
    for (auto& v : img.data) v += d;
    return img;
}

// Windowed SSIM evaluated with explicit loops over every valid 11x11 window.
double ssim_loop(const Image& a, const Image& b) {
    const std::size_t h = a.height, w = a.width;
    auto gray = [&](const Image& im, std::size_t y, std::size_t x) {
        return (im.data[y * w + x] + im.data[(h + y) * w + x] + im.data[(2 * h + y) * w + x]) / 3.0;
    };
    double g[11], gs = 0;
    for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    for (std::size_t y = 0; y + 11 <= h; ++y)
        for (std::size_t x = 0; x + 11 <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int u = 0; u < 11; ++u)
                for (int v = 0; v < 11; ++v) {
                    const double k = g[u] * g[v] / (gs * gs);
                    const double pa = gray(a, y + u, x + v), pb = gray(b, y + u, x + v);
                    ma += k * pa;
                    mb += k * pb;
                    saa += k * pa * pa;
                    sbb += k * pb * pb;
                    sab += k * pa * pb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    return total / double((h - 10) * (w - 10));
}

}  // namespace

TEST_CASE("psnr reference values") {
    const auto a = random_image(8, 8, 1, 0.0, 0.9);
    CHECK(psnr(a, a) == 99.0);
    CHECK(psnr(shifted(a, 0.1), a) == doctest::Approx(20.0).epsilon(1e-12));
    Image x(3, 4, 4, 10.0), y(3, 4, 4, 11.0);
    CHECK(psnr(x, y, 255.0) == doctest::Approx(48.1308036087).epsilon(1e-10));
    CHECK_THROWS_AS(psnr(a, random_image(8, 4, 2)), DimensionError);
}

TEST_CASE("psnr and ssim are symmetric") {
    const auto a = random_image(16, 16, 3), b = random_image(16, 16, 4);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
}

TEST_CASE("psnr falls as noise grows") {
    const auto a = random_image(16, 16, 5);
    Rng rng(6);
    std::vector<double> noise(a.data.size());
    for (auto& n : noise) n = rng.uniform(-1, 1);
    double prev = 1e9;
    for (double amp : {0.01, 0.05, 0.2}) {
        Image b = a;
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += amp * noise[i];
        const double p = psnr(a, b);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity, bounds and loop oracle") {
    const auto a = random_image(20, 17, 7);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    Image inv = a;
    for (auto& v : inv.data) v = 1.0 - v;
    const double s = ssim(a, inv);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    const auto b = random_image(20, 17, 8);
    CHECK(ssim(a, b) == doctest::Approx(ssim_loop(a, b)).epsilon(1e-10));
    const Image c1(3, 12, 12, 0.5), c2(3, 12, 12, 0.6);
    const double lum = (2 * 0.5 * 0.6 + 1e-4) / (0.25 + 0.36 + 1e-4);
    CHECK(ssim(c1, c2) == doctest::Approx(lum).epsilon(1e-12));
    CHECK(ssim(c1, c2) == doctest::Approx(ssim_loop(c1, c2)).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(random_image(10, 20, 9), random_image(10, 20, 9)), ContractError);
}

TEST_CASE("l1 metric agrees with the l1 loss") {
    const auto a = random_image(8, 8, 10), b = random_image(8, 8, 11);
    const double loss = l1_loss(image_to_tensor<double>(a), image_to_tensor<double>(b)).item();
    CHECK(l1_metric(a, b) == doctest::Approx(loss).epsilon(1e-14));
}

TEST_CASE("evaluate groups by bucket and reports skipped pairs") {
    std::vector<EvalItem> items;
    const auto gt = random_image(16, 16, 12);
    Image mask(1, 16, 16, 0.0);
    for (std::size_t i = 0; i < 40; ++i) mask.data[i] = 1.0;
    items.push_back({"same", gt, gt, mask, MaskBucket::low});
    items.push_back({"noisy", shifted(gt, 0.1), gt, mask, MaskBucket::low});
    items.push_back({"missing", std::nullopt, gt, mask, MaskBucket::high});
    const auto report = evaluate(items, false);
    REQUIRE(report.images.size() == 2);
    CHECK(report.images[0].psnr == 99.0);
    CHECK(report.images[0].ssim == doctest::Approx(1.0));
    CHECK(report.images[0].l1 == 0.0);
    REQUIRE(report.buckets.size() == 1);
    CHECK(report.buckets[0].count == 2);
    CHECK(report.buckets[0].psnr == doctest::Approx((99.0 + 20.0) / 2).epsilon(1e-9));
    CHECK(report.notices.size() >= 2);

    const auto composited = evaluate(items, true);
    const double want = psnr(composite_image(shifted(gt, 0.1), gt, mask), gt);
    CHECK(composited.images[1].psnr == doctest::Approx(want).epsilon(1e-12));

    std::ostringstream table, records;
    report.write_table(table);
    report.write_records(records);
    CHECK(table.str().find("bucket") != std::string::npos);
    CHECK(records.str().find("image=same bucket=low psnr=99") != std::string::npos);
}
