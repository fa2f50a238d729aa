#include "mxt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "mxt/errors.hpp"

namespace mxt {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw DimensionError(std::string(what) + ": image shapes differ");
    }
}

std::vector<double> grayscale(const Image& img) {
    std::vector<double> g(img.height * img.width, 0.0);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += img.data[c * g.size() + i];
    for (auto& v : g) v /= static_cast<double>(img.channels);
    return g;
}

constexpr std::size_t kWindow = 11;

std::vector<double> gaussian_window() {
    std::vector<double> w(kWindow);
    double total = 0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - 5.0;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
    const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> tmp(h * ow, 0.0), out(oh * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t i = 0; i < kWindow; ++i) s += k[i] * src[y * w + x + i];
            tmp[y * ow + x] = s;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t i = 0; i < kWindow; ++i) s += k[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace

double mse(const Image& a, const Image& b) {
    check_same(a, b, "mse");
    if (a.data.empty()) throw ContractError("mse of empty images");
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b, double max_val) {
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return 10.0 * std::log10(max_val * max_val / m);
}

double ssim(const Image& a, const Image& b, double max_val) {
    check_same(a, b, "ssim");
    if (a.height < kWindow || a.width < kWindow) {
        throw ContractError("ssim needs images of at least 11x11 pixels");
    }
    const auto x = grayscale(a), y = grayscale(b);
    const std::size_t h = a.height, w = a.width;
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto k = gaussian_window();
    const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k),
               sxy = filter_valid(xy, h, w, k);
    const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
    double total = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

double l1_metric(const Image& a, const Image& b) {
    check_same(a, b, "l1");
    if (a.data.empty()) throw ContractError("l1 of empty images");
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

Image composite_image(const Image& out, const Image& gt, const Image& mask) {
    check_same(out, gt, "composite");
    if (mask.channels != 1 || mask.height != out.height || mask.width != out.width) {
        throw DimensionError("composite: mask must be (1,H,W) matching the image");
    }
    Image r = out;
    for (std::size_t c = 0; c < out.channels; ++c)
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x) {
                const double m = mask.at(0, y, x);
                r.at(c, y, x) = m * out.at(c, y, x) + (1.0 - m) * gt.at(c, y, x);
            }
    return r;
}

MetricReport evaluate(const std::vector<EvalItem>& items, bool composite) {
    MetricReport report;
    for (const auto& item : items) {
        if (!item.output) {
            report.notices.push_back("missing output for '" + item.name + "', skipped");
            continue;
        }
        const Image shown = composite ? composite_image(*item.output, item.gt, item.mask) : *item.output;
        report.images.push_back({item.name, item.bucket, psnr(shown, item.gt), ssim(shown, item.gt),
                                 l1_metric(shown, item.gt)});
    }
    for (auto b : {MaskBucket::low, MaskBucket::mid, MaskBucket::high}) {
        BucketSummary s;
        s.bucket = b;
        for (const auto& m : report.images) {
            if (m.bucket != b) continue;
            ++s.count;
            s.psnr += m.psnr;
            s.ssim += m.ssim;
            s.l1 += m.l1;
        }
        if (s.count == 0) {
            report.notices.push_back("bucket " + to_string(b) + " has no images, row omitted");
            continue;
        }
        const double n = static_cast<double>(s.count);
        s.psnr /= n;
        s.ssim /= n;
        s.l1 /= n;
        report.buckets.push_back(s);
    }
    return report;
}

void MetricReport::write_table(std::ostream& os) const {
    os << std::left << std::setw(8) << "bucket" << std::right << std::setw(7) << "count"
       << std::setw(10) << "psnr" << std::setw(9) << "ssim" << std::setw(10) << "l1"
       << std::setw(10) << "l1x100" << "\n";
    for (const auto& b : buckets) {
        os << std::left << std::setw(8) << to_string(b.bucket) << std::right << std::setw(7) << b.count
           << std::setw(10) << fixed(b.psnr, 4) << std::setw(9) << fixed(b.ssim, 4) << std::setw(10)
           << fixed(b.l1, 5) << std::setw(10) << fixed(100.0 * b.l1, 4) << "\n";
    }
    for (const auto& n : notices) os << "note: " << n << "\n";
}

void MetricReport::write_records(std::ostream& os) const {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& m : images) {
        os << "image=" << m.name << " bucket=" << to_string(m.bucket) << " psnr=" << num(m.psnr)
           << " ssim=" << num(m.ssim) << " l1=" << num(m.l1) << " l1x100=" << num(100.0 * m.l1) << "\n";
    }
    for (const auto& b : buckets) {
        os << "bucket=" << to_string(b.bucket) << " count=" << b.count << " psnr=" << num(b.psnr)
           << " ssim=" << num(b.ssim) << " l1=" << num(b.l1) << " l1x100=" << num(100.0 * b.l1) << "\n";
    }
}

}  // namespace mxt
