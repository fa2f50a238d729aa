#include "mxt/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"

namespace mxt {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size() || value[0] == '-') {
        throw ParseError("model." + key + ": expected a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ParseError("model." + key + ": expected true or false, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size()) {
        throw ParseError("model." + key + ": expected a number, got '" + value + "'");
    }
    return v;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string to_string(FfnKind k) {
    switch (k) {
        case FfnKind::none: return "none";
        case FfnKind::gdfn: return "gdfn";
        case FfnKind::cbfn: return "cbfn";
    }
    return "?";
}

std::string to_string(QkScale s) {
    return s == QkScale::none ? "none" : "inverse-sqrt-dim";
}

void ModelConfig::validate() const {
    if (base_channels < 4) throw ContractError("model.base_channels must be >= 4");
    for (auto n : hm_counts) {
        if (n == 0) throw ContractError("model.hm_counts entries must all be >= 1");
    }
    if (input_channels != 4 || output_channels != 3) {
        throw ContractError("model expects 4 input channels (RGB + mask) and 3 output channels");
    }
    if (enable_srsa) SrsaConfig{base_channels, heads, pooled_spatial, qk_scale}.validate();
    if (enable_mamba) {
        MambaBlockConfig m;
        m.channels = base_channels;
        m.state_dim = state_dim;
        m.conv1d_kernel = conv1d_kernel;
        m.expand_ratio = expand_ratio;
        m.use_positional_embedding = positional_embedding;
        m.validate();
    }
    if (ffn != FfnKind::none) FfnConfig{base_channels, ffn_expansion, true}.validate();
}

std::size_t ModelConfig::block_channels(std::size_t i) const {
    static constexpr std::size_t mult[7] = {1, 2, 4, 8, 4, 2, 1};
    return base_channels * mult[i];
}

std::vector<std::pair<std::string, std::string>> ModelConfig::entries() const {
    std::string counts;
    for (std::size_t i = 0; i < hm_counts.size(); ++i) {
        counts += (i ? "," : "") + std::to_string(hm_counts[i]);
    }
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"model.base_channels", std::to_string(base_channels)},
        {"model.hm_counts", counts},
        {"model.state_dim", std::to_string(state_dim)},
        {"model.pooled_spatial", std::to_string(pooled_spatial)},
        {"model.heads", std::to_string(heads)},
        {"model.qk_scale", to_string(qk_scale)},
        {"model.enable_mamba", b(enable_mamba)},
        {"model.enable_srsa", b(enable_srsa)},
        {"model.ffn", to_string(ffn)},
        {"model.ffn_expansion", format_double(ffn_expansion)},
        {"model.conv1d_kernel", std::to_string(conv1d_kernel)},
        {"model.expand_ratio", std::to_string(expand_ratio)},
        {"model.positional_embedding", b(positional_embedding)},
        {"model.mamba_silu_after_conv", b(mamba_silu_after_conv)},
        {"model.ssm_skip", b(ssm_skip)},
    };
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "base_channels") {
        base_channels = parse_size(key, value);
    } else if (key == "hm_counts") {
        std::array<std::size_t, 7> counts{};
        std::stringstream ss(value);
        std::string item;
        std::size_t n = 0;
        while (std::getline(ss, item, ',')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (n == 7) throw ParseError("model.hm_counts needs exactly 7 entries");
            counts[n++] = parse_size(key, item);
        }
        if (n != 7) throw ParseError("model.hm_counts needs exactly 7 entries, got " + std::to_string(n));
        hm_counts = counts;
    } else if (key == "state_dim") {
        state_dim = parse_size(key, value);
    } else if (key == "pooled_spatial") {
        pooled_spatial = parse_size(key, value);
    } else if (key == "heads") {
        heads = parse_size(key, value);
    } else if (key == "qk_scale") {
        if (value == "none") qk_scale = QkScale::none;
        else if (value == "inverse-sqrt-dim") qk_scale = QkScale::inverse_sqrt_dim;
        else throw ParseError("model.qk_scale: expected inverse-sqrt-dim or none, got '" + value + "'");
    } else if (key == "enable_mamba") {
        enable_mamba = parse_bool(key, value);
    } else if (key == "enable_srsa") {
        enable_srsa = parse_bool(key, value);
    } else if (key == "ffn") {
        if (value == "none") ffn = FfnKind::none;
        else if (value == "gdfn") ffn = FfnKind::gdfn;
        else if (value == "cbfn") ffn = FfnKind::cbfn;
        else throw ParseError("model.ffn: expected none, gdfn or cbfn, got '" + value + "'");
    } else if (key == "ffn_expansion") {
        ffn_expansion = parse_double(key, value);
    } else if (key == "conv1d_kernel") {
        conv1d_kernel = parse_size(key, value);
    } else if (key == "expand_ratio") {
        expand_ratio = parse_size(key, value);
    } else if (key == "positional_embedding") {
        positional_embedding = parse_bool(key, value);
    } else if (key == "mamba_silu_after_conv") {
        mamba_silu_after_conv = parse_bool(key, value);
    } else if (key == "ssm_skip") {
        ssm_skip = parse_bool(key, value);
    } else {
        return false;
    }
    return true;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.entries() == b.entries();
}

ModelConfig ablation_config(char row, ModelConfig base) {
    switch (row) {
        case 'a': base.enable_mamba = false; base.enable_srsa = false; base.ffn = FfnKind::none; break;
        case 'b': base.enable_mamba = true; base.enable_srsa = false; base.ffn = FfnKind::gdfn; break;
        case 'c': base.enable_mamba = false; base.enable_srsa = true; base.ffn = FfnKind::gdfn; break;
        case 'd': base.enable_mamba = true; base.enable_srsa = true; base.ffn = FfnKind::gdfn; break;
        case 'e': base.enable_mamba = true; base.enable_srsa = true; base.ffn = FfnKind::cbfn; break;
        default: throw ContractError(std::string("unknown ablation row '") + row + "'");
    }
    return base;
}

template <class T>
HybridModule<T> HybridModule<T>::init(const ModelConfig& cfg, std::size_t channels, Rng& rng) {
    HybridModule hm;
    if (cfg.enable_srsa) {
        hm.srsa = Srsa<T>::init(SrsaConfig{channels, cfg.heads, cfg.pooled_spatial, cfg.qk_scale}, rng);
    }
    if (cfg.enable_mamba) {
        MambaBlockConfig m;
        m.channels = channels;
        m.state_dim = cfg.state_dim;
        m.conv1d_kernel = cfg.conv1d_kernel;
        m.expand_ratio = cfg.expand_ratio;
        m.use_positional_embedding = cfg.positional_embedding;
        m.silu_after_conv = cfg.mamba_silu_after_conv;
        m.use_skip = cfg.ssm_skip;
        hm.mamba = MambaBlock<T>::init(m, rng);
    }
    if (cfg.ffn != FfnKind::none) {
        hm.ffn = Gdfn<T>::init(FfnConfig{channels, cfg.ffn_expansion, cfg.ffn == FfnKind::cbfn}, rng);
    }
    return hm;
}

template <class T>
Tensor<T> HybridModule<T>::forward(const Tensor<T>& f) const {
    Tensor<T> x = f;
    if (srsa) x = add(x, srsa->forward(x));
    if (mamba) x = add(x, mamba->forward(x));
    if (ffn) x = add(x, ffn->forward(x));
    return x;
}

template <class T>
void HybridModule<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    if (srsa) srsa->visit(prefix + ".srsa", fn);
    if (mamba) mamba->visit(prefix + ".mamba", fn);
    if (ffn) ffn->visit(prefix + ".ffn", fn);
}

template <class T>
MxtModel<T> MxtModel<T>::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = Rng::derive(seed, 0x6d6f64656cULL);
    MxtModel m;
    m.cfg_ = cfg;
    const std::size_t c = cfg.base_channels;
    m.embed_w_ = init_uniform<T>({c, cfg.input_channels, 3, 3}, cfg.input_channels * 9, rng);
    m.embed_b_ = Tensor<T>::zeros({c}, true);
    for (std::size_t i = 0; i < 7; ++i) {
        const std::size_t ch = cfg.block_channels(i);
        for (std::size_t j = 0; j < cfg.hm_counts[i]; ++j) {
            m.blocks_[i].push_back(HybridModule<T>::init(cfg, ch, rng));
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t ch = cfg.block_channels(i);
        m.down_w_[i] = init_uniform<T>({2 * ch, ch, 3, 3}, ch * 9, rng);
        m.down_b_[i] = Tensor<T>::zeros({2 * ch}, true);
        const std::size_t in = cfg.block_channels(3 + i), out = in / 2;
        m.up_w_[i] = init_uniform<T>({out, in, 3, 3}, in * 9, rng);
        m.up_b_[i] = Tensor<T>::zeros({out}, true);
        m.fuse_w_[i] = init_uniform<T>({out, 2 * out, 1, 1}, 2 * out, rng);
        m.fuse_b_[i] = Tensor<T>::zeros({out}, true);
    }
    m.out_w_ = init_uniform<T>({cfg.output_channels, c, 3, 3}, c * 9, rng);
    m.out_b_ = Tensor<T>::zeros({cfg.output_channels}, true);
    return m;
}

template <class T>
Tensor<T> MxtModel<T>::forward(const Tensor<T>& i_masked, const Tensor<T>& mask,
                               ForwardTrace* trace) const {
    if (i_masked.rank() != 4 || i_masked.shape()[1] != 3) {
        throw DimensionError("masked image must be (B,3,H,W), got " + to_string(i_masked.shape()));
    }
    const std::size_t b = i_masked.shape()[0], h = i_masked.shape()[2], w = i_masked.shape()[3];
    if (mask.shape() != Shape{b, 1, h, w}) {
        throw DimensionError("mask must be " + to_string(Shape{b, 1, h, w}) + ", got " +
                             to_string(mask.shape()));
    }
    if (h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0) {
        throw DimensionError("image size " + std::to_string(h) + "x" + std::to_string(w) +
                             " must be a positive multiple of 8; pad the input to a multiple of 8");
    }
    auto run_block = [&](std::size_t i, Tensor<T> x) {
        for (const auto& hm : blocks_[i]) x = hm.forward(x);
        if (trace) trace->block_channels.push_back(x.shape()[1]);
        return x;
    };

    auto x = nn::conv2d(concat<T>({i_masked, mask}, 1), embed_w_, embed_b_, 1, 1);
    std::array<Tensor<T>, 3> skips;
    for (std::size_t i = 0; i < 3; ++i) {
        x = run_block(i, x);
        skips[i] = x;
        x = nn::conv2d(x, down_w_[i], down_b_[i], 2, 1);
        if (trace) ++trace->downsamples;
    }
    x = run_block(3, x);
    for (std::size_t i = 0; i < 3; ++i) {
        x = nn::conv2d(nn::upsample_nearest2x(x), up_w_[i], up_b_[i], 1, 1);
        if (trace) ++trace->upsamples;
        x = nn::conv2d(concat<T>({x, skips[2 - i]}, 1), fuse_w_[i], fuse_b_[i]);
        x = run_block(4 + i, x);
    }
    x = nn::conv2d(x, out_w_, out_b_, 1, 1);
    return affine(tanh(x), T(0.5), T(0.5));
}

template <class T>
void MxtModel<T>::visit(const ParamVisitor<T>& fn) {
    fn("embed.weight", embed_w_);
    fn("embed.bias", embed_b_);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t j = 0; j < blocks_[i].size(); ++j) {
            blocks_[i][j].visit("hb" + std::to_string(i + 1) + ".hm" + std::to_string(j), fn);
        }
        if (i < 3) {
            fn("down" + std::to_string(i + 1) + ".weight", down_w_[i]);
            fn("down" + std::to_string(i + 1) + ".bias", down_b_[i]);
        }
        if (i >= 3 && i < 6) {
            const std::size_t k = i - 3;
            fn("up" + std::to_string(k + 1) + ".weight", up_w_[k]);
            fn("up" + std::to_string(k + 1) + ".bias", up_b_[k]);
            fn("fuse" + std::to_string(k + 1) + ".weight", fuse_w_[k]);
            fn("fuse" + std::to_string(k + 1) + ".bias", fuse_b_[k]);
        }
    }
    fn("out.weight", out_w_);
    fn("out.bias", out_b_);
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> MxtModel<T>::named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    visit([&](const std::string& name, Tensor<T>& p) { out.emplace_back(name, p); });
    return out;
}

template <class T>
std::size_t MxtModel<T>::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor<T>& p) { n += p.numel(); });
    return n;
}

template <class T>
Tensor<T> composite(const Tensor<T>& out, const Tensor<T>& known, const Tensor<T>& mask) {
    return add(mul(mask, out), mul(affine(mask, T(-1), T(1)), known));
}

std::vector<TileOrigin> tile_plan(std::size_t height, std::size_t width, std::size_t tile,
                                  std::size_t overlap) {
    if (tile == 0 || tile % 8 != 0) throw ContractError("tile side must be a positive multiple of 8");
    if (2 * overlap >= tile) throw ContractError("tile overlap must be below half the tile side");
    if (tile > height || tile > width) return {{0, 0}};
    auto starts = [&](std::size_t extent) {
        std::vector<std::size_t> s;
        const std::size_t stride = tile - overlap;
        for (std::size_t p = 0;; p += stride) {
            if (p + tile >= extent) {
                s.push_back(extent - tile);
                break;
            }
            s.push_back(p);
        }
        return s;
    };
    std::vector<TileOrigin> plan;
    for (auto y : starts(height))
        for (auto x : starts(width)) plan.push_back({y, x});
    return plan;
}

double feather_weight(std::size_t pos, std::size_t tile, std::size_t overlap, bool ramp_low,
                      bool ramp_high) {
    double w = 1.0;
    const double band = static_cast<double>(overlap + 1);
    if (ramp_low && pos < overlap) w = std::min(w, static_cast<double>(pos + 1) / band);
    if (ramp_high && pos + overlap >= tile) w = std::min(w, static_cast<double>(tile - pos) / band);
    return w;
}

namespace {

// Per-tile separable weights plus the per-pixel total, shared by blending and its oracle.
struct BlendPlan {
    std::vector<TileOrigin> tiles;
    std::vector<std::vector<double>> wy, wx;
    std::vector<double> total;
};

BlendPlan make_blend_plan(std::size_t height, std::size_t width, std::size_t tile,
                          std::size_t overlap) {
    BlendPlan bp;
    bp.tiles = tile_plan(height, width, tile, overlap);
    bp.total.assign(height * width, 0.0);
    for (const auto& t : bp.tiles) {
        std::vector<double> wy(tile), wx(tile);
        for (std::size_t u = 0; u < tile; ++u) {
            wy[u] = feather_weight(u, tile, overlap, t.y > 0, t.y + tile < height);
            wx[u] = feather_weight(u, tile, overlap, t.x > 0, t.x + tile < width);
        }
        for (std::size_t u = 0; u < tile; ++u)
            for (std::size_t v = 0; v < tile; ++v)
                bp.total[(t.y + u) * width + t.x + v] += wy[u] * wx[v];
        bp.wy.push_back(std::move(wy));
        bp.wx.push_back(std::move(wx));
    }
    return bp;
}

}  // namespace

std::vector<double> blend_weight_sums(std::size_t height, std::size_t width, std::size_t tile,
                                      std::size_t overlap) {
    const auto bp = make_blend_plan(height, width, tile, overlap);
    std::vector<double> sums(height * width, 0.0);
    for (std::size_t k = 0; k < bp.tiles.size(); ++k) {
        const auto& t = bp.tiles[k];
        for (std::size_t u = 0; u < tile; ++u)
            for (std::size_t v = 0; v < tile; ++v) {
                const std::size_t idx = (t.y + u) * width + t.x + v;
                sums[idx] += bp.wy[k][u] * bp.wx[k][v] / bp.total[idx];
            }
    }
    return sums;
}

template <class T>
Tensor<T> tiled_inference(const MxtModel<T>& model, const Tensor<T>& image,
                          const Tensor<T>& mask, std::size_t tile, std::size_t overlap) {
    if (image.rank() != 3 || image.shape()[0] != 3) {
        throw DimensionError("tiled inference expects an image of shape (3,H,W), got " +
                             to_string(image.shape()));
    }
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    if (mask.shape() != Shape{1, h, w}) {
        throw DimensionError("tiled inference mask must be (1,H,W) matching the image");
    }
    NoGradGuard guard;
    if (tile == 0 || tile > h || tile > w) {
        return reshape(model.forward(reshape(image, {1, 3, h, w}), reshape(mask, {1, 1, h, w})),
                       {3, h, w});
    }
    const auto bp = make_blend_plan(h, w, tile, overlap);
    std::vector<double> acc(3 * h * w, 0.0);
    for (std::size_t k = 0; k < bp.tiles.size(); ++k) {
        const auto& t = bp.tiles[k];
        auto img = reshape(slice(image, {0, t.y, t.x}, {3, t.y + tile, t.x + tile}), {1, 3, tile, tile});
        auto msk = reshape(slice(mask, {0, t.y, t.x}, {1, t.y + tile, t.x + tile}), {1, 1, tile, tile});
        const auto out = model.forward(img, msk);
        const auto v = out.values();
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t u = 0; u < tile; ++u)
                for (std::size_t x = 0; x < tile; ++x) {
                    const std::size_t idx = (t.y + u) * w + t.x + x;
                    acc[ch * h * w + idx] += bp.wy[k][u] * bp.wx[k][x] / bp.total[idx] *
                                             static_cast<double>(v[(ch * tile + u) * tile + x]);
                }
    }
    std::vector<T> result(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) result[i] = static_cast<T>(acc[i]);
    return Tensor<T>({3, h, w}, std::move(result));
}

#define MXT_INSTANTIATE_MODEL(T)                                                            \
    template struct HybridModule<T>;                                                        \
    template class MxtModel<T>;                                                             \
    template Tensor<T> composite(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
    template Tensor<T> tiled_inference(const MxtModel<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       std::size_t, std::size_t);

MXT_INSTANTIATE_MODEL(float)
MXT_INSTANTIATE_MODEL(double)

}  // namespace mxt
