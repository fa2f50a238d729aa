#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mxt/data.hpp"

namespace mxt {

inline constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);
// Zero MSE returns kPsnrCap.
double psnr(const Image& a, const Image& b, double max_val = 1.0);
// Grayscale (channel mean) single-scale SSIM with an 11x11 Gaussian window
// (sigma 1.5) averaged over valid window positions.
double ssim(const Image& a, const Image& b, double max_val = 1.0);
double l1_metric(const Image& a, const Image& b);

// mask * out + (1 - mask) * gt
Image composite_image(const Image& out, const Image& gt, const Image& mask);

struct ImageMetrics {
    std::string name;
    MaskBucket bucket = MaskBucket::low;
    double psnr = 0, ssim = 0, l1 = 0;
};

struct BucketSummary {
    MaskBucket bucket = MaskBucket::low;
    std::size_t count = 0;
    double psnr = 0, ssim = 0, l1 = 0;  // means
};

struct MetricReport {
    std::vector<ImageMetrics> images;
    std::vector<BucketSummary> buckets;  // non-empty buckets, in low/mid/high order
    std::vector<std::string> notices;    // skipped pairs, empty buckets

    void write_table(std::ostream& os) const;
    void write_records(std::ostream& os) const;  // key=value lines
};

struct EvalItem {
    std::string name;
    std::optional<Image> output;  // missing output: listed and skipped
    Image gt;
    Image mask;
    MaskBucket bucket = MaskBucket::low;
};

// Metrics use the composited output unless composite is false.
MetricReport evaluate(const std::vector<EvalItem>& items, bool composite = true);

}  // namespace mxt
