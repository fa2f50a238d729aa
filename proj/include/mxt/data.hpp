#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mxt/tensor.hpp"

namespace mxt {

// Planar (C,H,W) image with values in [0,1].
struct Image {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<double> data;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
    bool operator==(const Image&) const = default;
};

// 8-bit quantization with round-half-up after clamping to [0,1].
std::uint8_t quantize(double v);

// Binary PPM (P6, maxval 255) and PGM (P5, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);
// Mask files: any nonzero byte is a hole.
Image read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const Image& mask);
Image decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm_mask(const Image& mask);
// Dispatches on the file signature; PNG is recognized and rejected.
Image read_image(const std::filesystem::path& path);

enum class MaskBucket { low, mid, high };

struct BucketRange {
    double low, high;  // ratio in (low, high]
    bool contains(double r) const { return r > low && r <= high; }
};

BucketRange bucket_range(MaskBucket b);
MaskBucket parse_bucket(const std::string& name);
std::string to_string(MaskBucket b);

struct StrokeParams {
    std::size_t min_vertices = 3, max_vertices = 8;
    double min_width = 0.03, max_width = 0.10;  // fractions of the shorter side
    double min_step = 0.06, max_step = 0.16;    // fractions of the shorter side
};

struct MaskSpec {
    MaskBucket bucket = MaskBucket::low;
    std::uint64_t seed = 0;
    StrokeParams strokes;
};

struct MaskResult {
    Image mask;  // (1,H,W), 1 = hole
    double ratio = 0.0;
    std::size_t attempts = 0;
    bool fallback = false;  // no attempt landed in the bucket
};

inline constexpr std::size_t kMaskAttemptCap = 64;

MaskResult generate_irregular_mask(const MaskSpec& spec, std::size_t height, std::size_t width);
double hole_ratio(const Image& mask);

struct ImageSample {
    Image gt;    // (3,H,W)
    Image mask;  // (1,H,W)
    MaskBucket bucket = MaskBucket::low;

    Image masked() const;  // gt * (1 - mask)
};

// Procedural images (gradients, shapes, sinusoidal textures) with bucket-cycled masks.
std::vector<ImageSample> synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                           std::uint64_t seed);

// Deterministic per-epoch shuffling; the last partial batch is kept.
class Batcher {
public:
    Batcher(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
    std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const;
    // Batch for a global step counting across epochs.
    std::vector<std::size_t> batch_for_step(std::uint64_t step) const;
    std::size_t batches_per_epoch() const;

private:
    std::size_t size_, batch_;
    std::uint64_t seed_;
};

template <class T>
struct Batch {
    Tensor<T> gt;      // (B,3,H,W)
    Tensor<T> mask;    // (B,1,H,W)
    Tensor<T> masked;  // gt * (1 - mask)
};

template <class T>
Batch<T> make_batch(const std::vector<ImageSample>& data, const std::vector<std::size_t>& indices);

template <class T>
Tensor<T> image_to_tensor(const Image& image);  // (1,C,H,W)
template <class T>
Image tensor_to_image(const Tensor<T>& t);  // from (C,H,W) or (1,C,H,W)

}  // namespace mxt
