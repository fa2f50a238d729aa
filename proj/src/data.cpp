#include "mxt/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "mxt/rng.hpp"

namespace mxt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct Header {
    std::size_t width = 0, height = 0, maxval = 0, data_offset = 0;
};

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (v > (1u << 24)) fail(std::string(what) + " is too large", start);
            ++pos_;
        }
        if (pos_ == start) fail(std::string("expected ") + what, start);
        return v;
    }

    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw ParseError("malformed image header at byte " + std::to_string(at) + ": " + msg);
    }

    std::size_t pos_ = 0;

private:
    const std::vector<std::uint8_t>& bytes_;
};

Header parse_header(const std::vector<std::uint8_t>& bytes, char kind) {
    HeaderReader r(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
        r.fail(std::string("expected magic 'P") + kind + "'", 0);
    }
    r.pos_ = 2;
    Header h;
    h.width = r.number("width");
    h.height = r.number("height");
    const std::size_t maxval_at = r.pos_;
    h.maxval = r.number("maxval");
    if (h.maxval != 255) {
        throw ParseError("unsupported maxval " + std::to_string(h.maxval) + " at byte " +
                         std::to_string(maxval_at) + ": only 8-bit files with maxval 255 are supported");
    }
    if (h.width == 0 || h.height == 0) r.fail("zero image dimension", 2);
    if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) {
        r.fail("expected a single whitespace byte before pixel data", r.pos_);
    }
    h.data_offset = r.pos_ + 1;
    return h;
}

std::vector<std::uint8_t> encode_header(char kind, std::size_t w, std::size_t h) {
    const std::string s = std::string("P") + kind + "\n" + std::to_string(w) + " " +
                          std::to_string(h) + "\n255\n";
    return {s.begin(), s.end()};
}

// Paints a disc of the given radius centered at (cy, cx).
void paint_disc(Image& m, double cy, double cx, double radius) {
    const long y0 = static_cast<long>(std::floor(cy - radius)), y1 = static_cast<long>(std::ceil(cy + radius));
    const long x0 = static_cast<long>(std::floor(cx - radius)), x1 = static_cast<long>(std::ceil(cx + radius));
    for (long y = std::max(0L, y0); y <= std::min<long>(static_cast<long>(m.height) - 1, y1); ++y) {
        for (long x = std::max(0L, x0); x <= std::min<long>(static_cast<long>(m.width) - 1, x1); ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius) m.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
        }
    }
}

void draw_stroke(Image& m, const StrokeParams& sp, Rng& rng) {
    const double side = static_cast<double>(std::min(m.height, m.width));
    const std::size_t vertices =
        sp.min_vertices + static_cast<std::size_t>(rng.below(sp.max_vertices - sp.min_vertices + 1));
    const double radius = std::max(0.5, 0.5 * side * rng.uniform(sp.min_width, sp.max_width));
    double y = rng.uniform(0.0, static_cast<double>(m.height));
    double x = rng.uniform(0.0, static_cast<double>(m.width));
    double angle = rng.uniform(0.0, 2.0 * kPi);
    paint_disc(m, y, x, radius);
    for (std::size_t v = 0; v < vertices; ++v) {
        angle += rng.uniform(-0.4 * kPi, 0.4 * kPi);
        const double len = side * rng.uniform(sp.min_step, sp.max_step);
        const double ny = std::clamp(y + len * std::sin(angle), 0.0, static_cast<double>(m.height));
        const double nx = std::clamp(x + len * std::cos(angle), 0.0, static_cast<double>(m.width));
        const double dist = std::hypot(ny - y, nx - x);
        const std::size_t steps = static_cast<std::size_t>(std::ceil(dist * 2.0)) + 1;
        for (std::size_t s = 1; s <= steps; ++s) {
            const double t = static_cast<double>(s) / static_cast<double>(steps);
            paint_disc(m, y + t * (ny - y), x + t * (nx - x), radius);
        }
        y = ny;
        x = nx;
    }
}

}  // namespace

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
    const Header h = parse_header(bytes, '6');
    const std::size_t need = h.width * h.height * 3;
    if (bytes.size() < h.data_offset + need) {
        throw ParseError("PPM pixel data truncated at byte " + std::to_string(bytes.size()) +
                         ": expected " + std::to_string(need) + " bytes from offset " +
                         std::to_string(h.data_offset));
    }
    Image img(3, h.height, h.width);
    const std::uint8_t* p = bytes.data() + h.data_offset;
    for (std::size_t y = 0; y < h.height; ++y)
        for (std::size_t x = 0; x < h.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = *p++ / 255.0;
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
    if (image.channels != 3) throw DimensionError("PPM output needs 3 channels");
    auto out = encode_header('6', image.width, image.height);
    out.reserve(out.size() + image.data.size());
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.push_back(quantize(image.at(c, y, x)));
    return out;
}

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_bytes(path)); }
void write_ppm(const std::filesystem::path& path, const Image& image) { write_bytes(path, encode_ppm(image)); }

Image decode_pgm(const std::vector<std::uint8_t>& bytes) {
    const Header h = parse_header(bytes, '5');
    const std::size_t need = h.width * h.height;
    if (bytes.size() < h.data_offset + need) {
        throw ParseError("PGM pixel data truncated at byte " + std::to_string(bytes.size()));
    }
    Image m(1, h.height, h.width);
    for (std::size_t i = 0; i < need; ++i) m.data[i] = bytes[h.data_offset + i] != 0 ? 1.0 : 0.0;
    return m;
}

std::vector<std::uint8_t> encode_pgm_mask(const Image& mask) {
    if (mask.channels != 1) throw DimensionError("mask output needs 1 channel");
    auto out = encode_header('5', mask.width, mask.height);
    for (double v : mask.data) out.push_back(v >= 0.5 ? 255 : 0);
    return out;
}

Image read_pgm_mask(const std::filesystem::path& path) { return decode_pgm(read_bytes(path)); }
void write_pgm_mask(const std::filesystem::path& path, const Image& mask) {
    write_bytes(path, encode_pgm_mask(mask));
}

Image read_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) {
        throw ParseError("'" + path.string() + "' is a PNG file; this build has no PNG decoder, convert it to binary PPM (P6)");
    }
    return decode_ppm(bytes);
}

BucketRange bucket_range(MaskBucket b) {
    switch (b) {
        case MaskBucket::low: return {0.0001, 0.20};
        case MaskBucket::mid: return {0.20, 0.40};
        case MaskBucket::high: return {0.40, 0.60};
    }
    return {0, 0};
}

MaskBucket parse_bucket(const std::string& name) {
    if (name == "low") return MaskBucket::low;
    if (name == "mid") return MaskBucket::mid;
    if (name == "high") return MaskBucket::high;
    throw UsageError("unknown mask bucket '" + name + "' (expected low, mid or high)");
}

std::string to_string(MaskBucket b) {
    switch (b) {
        case MaskBucket::low: return "low";
        case MaskBucket::mid: return "mid";
        case MaskBucket::high: return "high";
    }
    return "?";
}

double hole_ratio(const Image& mask) {
    if (mask.data.empty()) return 0.0;
    std::size_t holes = 0;
    for (double v : mask.data) holes += v >= 0.5 ? 1 : 0;
    return static_cast<double>(holes) / static_cast<double>(mask.data.size());
}

MaskResult generate_irregular_mask(const MaskSpec& spec, std::size_t height, std::size_t width) {
    if (height < 16 || width < 16) throw ContractError("masks need H, W >= 16");
    const auto& sp = spec.strokes;
    if (sp.min_vertices > sp.max_vertices || !(sp.min_width > 0) || sp.min_width > sp.max_width ||
        !(sp.min_step > 0) || sp.min_step > sp.max_step) {
        throw ContractError("invalid stroke parameters");
    }
    const BucketRange range = bucket_range(spec.bucket);
    MaskResult best;
    double best_distance = 2.0;
    for (std::size_t attempt = 0; attempt < kMaskAttemptCap; ++attempt) {
        Rng rng = Rng::derive(spec.seed, attempt);
        const double target = rng.uniform(range.low, range.high);
        Image m(1, height, width);
        double ratio = 0.0;
        for (std::size_t s = 0; s < 10000 && !(ratio > range.low && ratio >= target); ++s) {
            draw_stroke(m, sp, rng);
            ratio = hole_ratio(m);
        }
        if (range.contains(ratio)) return {std::move(m), ratio, attempt + 1, false};
        const double distance = ratio <= range.low ? range.low - ratio : ratio - range.high;
        if (distance < best_distance) {
            best_distance = distance;
            best = {std::move(m), ratio, attempt + 1, true};
        }
    }
    best.attempts = kMaskAttemptCap;
    return best;
}

Image ImageSample::masked() const {
    Image out = gt;
    for (std::size_t c = 0; c < gt.channels; ++c)
        for (std::size_t y = 0; y < gt.height; ++y)
            for (std::size_t x = 0; x < gt.width; ++x) {
                const double m = mask.at(0, y, x);
                out.at(c, y, x) = m == 1.0 ? 0.0 : out.at(c, y, x) * (1.0 - m);
            }
    return out;
}

std::vector<ImageSample> synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                           std::uint64_t seed) {
    if (n == 0) throw ContractError("synthetic dataset needs n >= 1");
    std::vector<ImageSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, 2 * i);
        Image img(3, height, width);
        double corner[4][3];
        for (auto& c : corner)
            for (auto& v : c) v = rng.uniform(0.1, 0.9);
        for (std::size_t y = 0; y < height; ++y) {
            const double fy = height > 1 ? static_cast<double>(y) / static_cast<double>(height - 1) : 0.0;
            for (std::size_t x = 0; x < width; ++x) {
                const double fx = width > 1 ? static_cast<double>(x) / static_cast<double>(width - 1) : 0.0;
                for (std::size_t c = 0; c < 3; ++c) {
                    img.at(c, y, x) = (1 - fy) * ((1 - fx) * corner[0][c] + fx * corner[1][c]) +
                                      fy * ((1 - fx) * corner[2][c] + fx * corner[3][c]);
                }
            }
        }
        const std::size_t shapes = 2 + static_cast<std::size_t>(rng.below(3));
        for (std::size_t s = 0; s < shapes; ++s) {
            double color[3];
            for (auto& v : color) v = rng.uniform(0.0, 1.0);
            const double cy = rng.uniform(0.0, static_cast<double>(height));
            const double cx = rng.uniform(0.0, static_cast<double>(width));
            const double ry = rng.uniform(0.1, 0.3) * static_cast<double>(height);
            const double rx = rng.uniform(0.1, 0.3) * static_cast<double>(width);
            const bool circle = rng.below(2) == 0;
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
                    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
                    const bool inside = circle ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
                    if (inside)
                        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
                }
        }
        const double amp = rng.uniform(0.03, 0.1);
        const double ky = rng.uniform(0.1, 0.6), kx = rng.uniform(0.1, 0.6);
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double t = amp * std::sin(ky * static_cast<double>(y) + kx * static_cast<double>(x) +
                                                    phase + 2.0 * static_cast<double>(c));
                    img.at(c, y, x) = std::clamp(img.at(c, y, x) + t, 0.0, 1.0);
                }

        ImageSample sample;
        sample.gt = std::move(img);
        sample.bucket = static_cast<MaskBucket>(i % 3);
        MaskSpec spec;
        spec.bucket = sample.bucket;
        spec.seed = Rng::derive(seed, 2 * i + 1).next();
        sample.mask = generate_irregular_mask(spec, height, width).mask;
        out.push_back(std::move(sample));
    }
    return out;
}

Batcher::Batcher(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), seed_(seed) {
    if (dataset_size == 0) throw ContractError("cannot batch an empty dataset");
    if (batch_size == 0) throw ContractError("batch size must be >= 1");
}

std::vector<std::size_t> Batcher::epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(size_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive(seed_, 0x7368756600000000ULL + epoch);
    for (std::size_t i = size_; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::size_t Batcher::batches_per_epoch() const { return (size_ + batch_ - 1) / batch_; }

std::vector<std::vector<std::size_t>> Batcher::epoch_batches(std::uint64_t epoch) const {
    const auto order = epoch_order(epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < size_; i += batch_) {
        out.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(std::min(size_, i + batch_)));
    }
    return out;
}

std::vector<std::size_t> Batcher::batch_for_step(std::uint64_t step) const {
    const std::size_t per = batches_per_epoch();
    return epoch_batches(step / per)[step % per];
}

template <class T>
Batch<T> make_batch(const std::vector<ImageSample>& data, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("empty batch");
    const auto& first = data.at(indices[0]);
    const std::size_t h = first.gt.height, w = first.gt.width, b = indices.size();
    std::vector<T> gt(b * 3 * h * w), mask(b * h * w), masked(b * 3 * h * w);
    for (std::size_t k = 0; k < b; ++k) {
        const auto& s = data.at(indices[k]);
        if (s.gt.height != h || s.gt.width != w || s.mask.height != h || s.mask.width != w) {
            throw DimensionError("batch samples must share one image size");
        }
        for (std::size_t i = 0; i < h * w; ++i) mask[k * h * w + i] = static_cast<T>(s.mask.data[i]);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < h * w; ++i) {
                const std::size_t idx = (k * 3 + c) * h * w + i;
                gt[idx] = static_cast<T>(s.gt.data[c * h * w + i]);
                const T m = mask[k * h * w + i];
                masked[idx] = m == T(1) ? T(0) : gt[idx] * (T(1) - m);
            }
    }
    return {Tensor<T>({b, 3, h, w}, std::move(gt)), Tensor<T>({b, 1, h, w}, std::move(mask)),
            Tensor<T>({b, 3, h, w}, std::move(masked))};
}

template <class T>
Tensor<T> image_to_tensor(const Image& image) {
    std::vector<T> v(image.data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(image.data[i]);
    return Tensor<T>({1, image.channels, image.height, image.width}, std::move(v));
}

template <class T>
Image tensor_to_image(const Tensor<T>& t) {
    const auto& s = t.shape();
    if (!(s.size() == 3 || (s.size() == 4 && s[0] == 1))) {
        throw DimensionError("expected a (C,H,W) or (1,C,H,W) tensor, got " + to_string(s));
    }
    const std::size_t off = s.size() - 3;
    Image img(s[off], s[off + 1], s[off + 2]);
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = static_cast<double>(v[i]);
    return img;
}

#define MXT_INSTANTIATE_DATA(T)                                                                   \
    template Batch<T> make_batch<T>(const std::vector<ImageSample>&, const std::vector<std::size_t>&); \
    template Tensor<T> image_to_tensor<T>(const Image&);                                          \
    template Image tensor_to_image<T>(const Tensor<T>&);

MXT_INSTANTIATE_DATA(float)
MXT_INSTANTIATE_DATA(double)

}  // namespace mxt
