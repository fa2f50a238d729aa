#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mxt/blocks.hpp"

namespace mxt {

enum class FfnKind { none, gdfn, cbfn };

struct ModelConfig {
    std::size_t base_channels = 16;
    std::array<std::size_t, 7> hm_counts{4, 6, 6, 8, 6, 6, 4};
    std::size_t state_dim = 16;
    std::size_t pooled_spatial = 8;
    std::size_t heads = 1;
    QkScale qk_scale = QkScale::inverse_sqrt_dim;
    bool enable_mamba = true;
    bool enable_srsa = true;
    FfnKind ffn = FfnKind::cbfn;
    double ffn_expansion = 2.66;
    std::size_t conv1d_kernel = 4;
    std::size_t expand_ratio = 2;
    bool positional_embedding = true;
    bool mamba_silu_after_conv = false;
    bool ssm_skip = false;
    std::size_t input_channels = 4;
    std::size_t output_channels = 3;

    void validate() const;
    // Width of hybrid block i (0..6).
    std::size_t block_channels(std::size_t i) const;

    // Flat "model.key = value" entries, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    // Applies one key without the "model." prefix; false when the key is unknown.
    bool set(const std::string& key, const std::string& value);
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

// Ablation rows: "a" (plain U-Net) through "e" (full model).
ModelConfig ablation_config(char row, ModelConfig base = {});

std::string to_string(FfnKind k);
std::string to_string(QkScale s);

template <class T>
struct HybridModule {
    std::optional<Srsa<T>> srsa;
    std::optional<MambaBlock<T>> mamba;
    std::optional<Gdfn<T>> ffn;

    static HybridModule init(const ModelConfig& cfg, std::size_t channels, Rng& rng);
    Tensor<T> forward(const Tensor<T>& f) const;
    void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

struct ForwardTrace {
    std::size_t downsamples = 0;
    std::size_t upsamples = 0;
    std::vector<std::size_t> block_channels;
};

template <class T>
class MxtModel {
public:
    static MxtModel init(const ModelConfig& cfg, std::uint64_t seed);

    // i_masked (B,3,H,W), mask (B,1,H,W) with 1 = hole. Output in [0,1].
    Tensor<T> forward(const Tensor<T>& i_masked, const Tensor<T>& mask,
                      ForwardTrace* trace = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    void visit(const ParamVisitor<T>& fn);
    std::vector<std::pair<std::string, Tensor<T>>> named_parameters();
    std::size_t parameter_count();

private:
    ModelConfig cfg_;
    Tensor<T> embed_w_, embed_b_;
    std::array<std::vector<HybridModule<T>>, 7> blocks_;
    std::array<Tensor<T>, 3> down_w_, down_b_, up_w_, up_b_, fuse_w_, fuse_b_;
    Tensor<T> out_w_, out_b_;
};

// mask * out + (1 - mask) * known, elementwise with mask broadcast over channels.
template <class T>
Tensor<T> composite(const Tensor<T>& out, const Tensor<T>& known, const Tensor<T>& mask);

struct TileOrigin {
    std::size_t y = 0, x = 0;
};

// Tile origins covering an H x W image with the given overlap; the last row
// and column of tiles are aligned to the image edge.
std::vector<TileOrigin> tile_plan(std::size_t height, std::size_t width, std::size_t tile,
                                  std::size_t overlap);

// Unnormalized feathering weight of a tile pixel: ramps linearly across the
// overlap band on sides that border another tile, 1 elsewhere.
double feather_weight(std::size_t pos, std::size_t tile, std::size_t overlap, bool ramp_low,
                      bool ramp_high);

// Per-pixel sum of normalized blend weights over all tiles (should be all ones).
std::vector<double> blend_weight_sums(std::size_t height, std::size_t width, std::size_t tile,
                                      std::size_t overlap);

// image (3,H,W), mask (1,H,W). Falls back to a single pass when the tile does
// not fit inside the image.
template <class T>
Tensor<T> tiled_inference(const MxtModel<T>& model, const Tensor<T>& image,
                          const Tensor<T>& mask, std::size_t tile, std::size_t overlap);

}  // namespace mxt
