#include "mxt/blocks.hpp"

#include <cmath>

#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"

namespace mxt {

template <class T>
Tensor<T> positional_embedding(std::size_t length, std::size_t channels) {
    if (channels % 2 != 0) {
        throw ContractError("positional embedding needs an even channel count, got " +
                            std::to_string(channels));
    }
    std::vector<T> v(length * channels);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < channels / 2; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * i) / channels);
            const double angle = static_cast<double>(pos) * freq;
            v[pos * channels + 2 * i] = static_cast<T>(std::sin(angle));
            v[pos * channels + 2 * i + 1] = static_cast<T>(std::cos(angle));
        }
    }
    return Tensor<T>({length, channels}, std::move(v));
}

template <class T>
Tensor<T> init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> v(numel(shape));
    for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>(std::move(shape), std::move(v), true);
}

template <class T>
LayerNorm<T> LayerNorm<T>::init(std::size_t channels) {
    return {Tensor<T>::full({channels}, T(1), true), Tensor<T>::zeros({channels}, true)};
}

template <class T>
Tensor<T> LayerNorm<T>::forward_channels(const Tensor<T>& x) const {
    return nn::layer_norm_channels(x, gamma, beta);
}

template <class T>
Tensor<T> LayerNorm<T>::forward_last(const Tensor<T>& x) const {
    return nn::layer_norm_last(x, gamma, beta);
}

template <class T>
void LayerNorm<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

void SrsaConfig::validate() const {
    if (channels == 0 || heads == 0 || channels % heads != 0) {
        throw ContractError("SRSA channels (" + std::to_string(channels) +
                            ") must be a positive multiple of heads (" + std::to_string(heads) + ")");
    }
    if (pooled_spatial == 0) throw ContractError("SRSA pooled_spatial must be >= 1");
}

template <class T>
Srsa<T> Srsa<T>::init(const SrsaConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.channels;
    Srsa s;
    s.cfg = cfg;
    s.norm = LayerNorm<T>::init(c);
    s.qkv_weight = init_uniform<T>({3 * c, c, 1, 1}, c, rng);
    s.qkv_bias = Tensor<T>::zeros({3 * c}, true);
    s.dw_weight = init_uniform<T>({3 * c, 1, 3, 3}, 9, rng);
    s.dw_bias = Tensor<T>::zeros({3 * c}, true);
    s.le_weight = init_uniform<T>({c, 1, 3, 3}, 9, rng);
    s.le_bias = Tensor<T>::zeros({c}, true);
    return s;
}

template <class T>
Tensor<T> Srsa<T>::forward(const Tensor<T>& f, Tensor<T>* attention) const {
    if (f.rank() != 4 || f.shape()[1] != cfg.channels) {
        throw DimensionError("SRSA expects (B," + std::to_string(cfg.channels) + ",H,W), got " +
                             to_string(f.shape()));
    }
    const std::size_t b = f.shape()[0], c = cfg.channels, h = f.shape()[2], w = f.shape()[3];
    if (h * w == 0) throw DimensionError("SRSA input has no pixels");
    const std::size_t heads = cfg.heads, dh = c / heads, s = cfg.pooled_spatial;
    const std::size_t tokens = s * s, pixels = h * w;

    auto x = norm.forward_channels(f);
    x = nn::conv2d(x, qkv_weight, qkv_bias);
    x = nn::conv2d(x, dw_weight, dw_bias, 1, 1, 3 * c);
    auto qkv = split(x, {c, c, c}, 1);
    const auto& v = qkv[2];

    auto q = reshape(qkv[0], {b, heads, dh, pixels});
    auto k = reshape(nn::adaptive_avg_pool2d(qkv[1], s), {b, heads, dh, tokens});
    auto vp = reshape(nn::adaptive_avg_pool2d(v, s), {b, heads, dh, tokens});

    auto logits = matmul(transpose(k, 2, 3), q);  // (b, heads, tokens, pixels)
    if (cfg.qk_scale == QkScale::inverse_sqrt_dim) {
        logits = affine(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))), T(0));
    }
    auto att = softmax(logits, 2);
    if (attention) *attention = att;
    auto out = reshape(matmul(vp, att), {b, c, h, w});
    return add(out, nn::conv2d(v, le_weight, le_bias, 1, 1, c));
}

template <class T>
void Srsa<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    norm.visit(prefix + ".norm", fn);
    fn(prefix + ".qkv.weight", qkv_weight);
    fn(prefix + ".qkv.bias", qkv_bias);
    fn(prefix + ".dw.weight", dw_weight);
    fn(prefix + ".dw.bias", dw_bias);
    fn(prefix + ".le.weight", le_weight);
    fn(prefix + ".le.bias", le_bias);
}

void MambaBlockConfig::validate() const {
    if (channels == 0 || state_dim == 0 || conv1d_kernel == 0 || expand_ratio == 0) {
        throw ContractError("Mamba block sizes must all be positive");
    }
    if (use_positional_embedding && channels % 2 != 0) {
        throw ContractError("Mamba positional embedding needs an even channel count");
    }
}

template <class T>
MambaBlock<T> MambaBlock<T>::init(const MambaBlockConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.channels, d = cfg.inner(), k = cfg.conv1d_kernel;
    MambaBlock m;
    m.cfg = cfg;
    m.norm = LayerNorm<T>::init(c);
    m.in_weight = init_uniform<T>({c, d}, c, rng);
    m.in_bias = Tensor<T>::zeros({d}, true);
    m.conv_weight = init_uniform<T>({d, k}, k, rng);
    m.conv_bias = Tensor<T>::zeros({d}, true);
    m.ssm = ssm::SsmParams<T>::init(d, cfg.state_dim, cfg.use_skip, rng);
    m.gate_weight = init_uniform<T>({c, d}, c, rng);
    m.gate_bias = Tensor<T>::zeros({d}, true);
    m.out_weight = init_uniform<T>({d, c}, d, rng);
    m.out_bias = Tensor<T>::zeros({c}, true);
    return m;
}

template <class T>
Tensor<T> MambaBlock<T>::forward(const Tensor<T>& f) const {
    if (f.rank() != 4 || f.shape()[1] != cfg.channels) {
        throw DimensionError("Mamba block expects (B," + std::to_string(cfg.channels) +
                             ",H,W), got " + to_string(f.shape()));
    }
    const std::size_t b = f.shape()[0], c = cfg.channels, h = f.shape()[2], w = f.shape()[3];
    const std::size_t len = h * w;
    if (len == 0) throw DimensionError("Mamba block input has no pixels");

    auto seq = transpose(reshape(f, {b, c, len}), 1, 2);  // (b, len, c), raster order
    if (cfg.use_positional_embedding) seq = add(seq, positional_embedding<T>(len, c));
    seq = norm.forward_last(seq);

    auto body = nn::linear(seq, in_weight, in_bias);
    if (cfg.silu_after_conv) {
        body = silu(nn::causal_depthwise_conv1d(body, conv_weight, conv_bias));
    } else {
        body = nn::causal_depthwise_conv1d(silu(body), conv_weight, conv_bias);
    }
    body = ssm::selective_ssm(body, ssm);
    auto gate = silu(nn::linear(seq, gate_weight, gate_bias));
    auto out = nn::linear(mul(gate, body), out_weight, out_bias);  // (b, len, c)
    return reshape(transpose(out, 1, 2), {b, c, h, w});
}

template <class T>
void MambaBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    norm.visit(prefix + ".norm", fn);
    fn(prefix + ".in.weight", in_weight);
    fn(prefix + ".in.bias", in_bias);
    fn(prefix + ".conv.weight", conv_weight);
    fn(prefix + ".conv.bias", conv_bias);
    fn(prefix + ".ssm.a_log", ssm.a_log);
    fn(prefix + ".ssm.delta.weight", ssm.delta_weight);
    fn(prefix + ".ssm.delta.bias", ssm.delta_bias);
    fn(prefix + ".ssm.b.weight", ssm.b_weight);
    fn(prefix + ".ssm.c.weight", ssm.c_weight);
    if (ssm.skip_d.defined()) fn(prefix + ".ssm.skip", ssm.skip_d);
    fn(prefix + ".gate.weight", gate_weight);
    fn(prefix + ".gate.bias", gate_bias);
    fn(prefix + ".out.weight", out_weight);
    fn(prefix + ".out.bias", out_bias);
}

void FfnConfig::validate() const {
    if (channels == 0) throw ContractError("feed-forward channels must be positive");
    if (hidden() < channels) {
        throw ContractError("feed-forward hidden width " + std::to_string(hidden()) +
                            " is below the channel count " + std::to_string(channels));
    }
}

std::size_t FfnConfig::hidden() const {
    return static_cast<std::size_t>(std::lround(expansion * static_cast<double>(channels)));
}

template <class T>
Gdfn<T> Gdfn<T>::init(const FfnConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.channels, hid = cfg.hidden();
    Gdfn g;
    g.cfg = cfg;
    g.norm = LayerNorm<T>::init(c);
    g.in_weight = init_uniform<T>({2 * hid, c, 1, 1}, c, rng);
    g.in_bias = Tensor<T>::zeros({2 * hid}, true);
    g.dw_weight = init_uniform<T>({2 * hid, 1, 3, 3}, 9, rng);
    g.dw_bias = Tensor<T>::zeros({2 * hid}, true);
    g.out_weight = init_uniform<T>({c, hid, 1, 1}, hid, rng);
    g.out_bias = Tensor<T>::zeros({c}, true);
    return g;
}

template <class T>
Tensor<T> Gdfn<T>::gated(const Tensor<T>& f) const {
    if (f.rank() != 4 || f.shape()[1] != cfg.channels) {
        throw DimensionError("feed-forward block expects (B," + std::to_string(cfg.channels) +
                             ",H,W), got " + to_string(f.shape()));
    }
    const std::size_t hid = cfg.hidden();
    auto x = nn::conv2d(norm.forward_channels(f), in_weight, in_bias);
    x = nn::conv2d(x, dw_weight, dw_bias, 1, 1, 2 * hid);
    auto parts = split(x, {hid, hid}, 1);
    return nn::conv2d(mul(gelu(parts[0]), parts[1]), out_weight, out_bias);
}

template <class T>
Tensor<T> Gdfn<T>::forward(const Tensor<T>& f) const {
    auto out = gated(f);
    if (!cfg.broadcast_context) return out;
    return add(out, mean(out, {1, 2, 3}, true));
}

template <class T>
void Gdfn<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
    norm.visit(prefix + ".norm", fn);
    fn(prefix + ".in.weight", in_weight);
    fn(prefix + ".in.bias", in_bias);
    fn(prefix + ".dw.weight", dw_weight);
    fn(prefix + ".dw.bias", dw_bias);
    fn(prefix + ".out.weight", out_weight);
    fn(prefix + ".out.bias", out_bias);
}

#define MXT_INSTANTIATE_BLOCKS(T)                                                     \
    template Tensor<T> positional_embedding<T>(std::size_t, std::size_t);           \
    template Tensor<T> init_uniform<T>(Shape, std::size_t, Rng&);                    \
    template struct LayerNorm<T>;                                                     \
    template struct Srsa<T>;                                                          \
    template struct MambaBlock<T>;                                                    \
    template struct Gdfn<T>;

MXT_INSTANTIATE_BLOCKS(float)
MXT_INSTANTIATE_BLOCKS(double)

}  // namespace mxt
