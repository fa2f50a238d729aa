#pragma once

#include <functional>
#include <string>

#include "mxt/rng.hpp"
#include "mxt/ssm.hpp"
#include "mxt/tensor.hpp"

namespace mxt {

template <class T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& param)>;

// Sinusoidal table (length, channels): even columns sin, odd columns cos.
template <class T>
Tensor<T> positional_embedding(std::size_t length, std::size_t channels);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, used by every block.
template <class T>
Tensor<T> init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

template <class T>
struct LayerNorm {
    Tensor<T> gamma, beta;

    static LayerNorm init(std::size_t channels);
    // Channel axis of (B,C,H,W).
    Tensor<T> forward_channels(const Tensor<T>& x) const;
    // Last axis.
    Tensor<T> forward_last(const Tensor<T>& x) const;
    void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

enum class QkScale { inverse_sqrt_dim, none };

struct SrsaConfig {
    std::size_t channels = 16;
    std::size_t heads = 1;
    std::size_t pooled_spatial = 8;
    QkScale qk_scale = QkScale::inverse_sqrt_dim;

    void validate() const;
};

template <class T>
struct Srsa {
    SrsaConfig cfg;
    LayerNorm<T> norm;
    Tensor<T> qkv_weight, qkv_bias;  // 1x1 conv C -> 3C
    Tensor<T> dw_weight, dw_bias;    // depth-wise 3x3 on 3C
    Tensor<T> le_weight, le_bias;    // depth-wise 3x3 on V

    static Srsa init(const SrsaConfig& cfg, Rng& rng);
    // attention, when given, receives (B, heads, pooled^2, H*W) probabilities;
    // each column over the pooled axis sums to one.
    Tensor<T> forward(const Tensor<T>& f, Tensor<T>* attention = nullptr) const;
    void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

struct MambaBlockConfig {
    std::size_t channels = 16;
    std::size_t state_dim = 8;
    std::size_t conv1d_kernel = 4;
    std::size_t expand_ratio = 2;
    bool use_positional_embedding = true;
    // Linear -> conv1d -> SiLU instead of Linear -> SiLU -> conv1d.
    bool silu_after_conv = false;
    bool use_skip = false;

    void validate() const;
    std::size_t inner() const { return channels * expand_ratio; }
};

template <class T>
struct MambaBlock {
    MambaBlockConfig cfg;
    LayerNorm<T> norm;
    Tensor<T> in_weight, in_bias;      // (C, D), (D)
    Tensor<T> conv_weight, conv_bias;  // (D, K), (D)
    ssm::SsmParams<T> ssm;
    Tensor<T> gate_weight, gate_bias;  // (C, D), (D)
    Tensor<T> out_weight, out_bias;    // (D, C), (C)

    static MambaBlock init(const MambaBlockConfig& cfg, Rng& rng);
    Tensor<T> forward(const Tensor<T>& f) const;
    void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

struct FfnConfig {
    std::size_t channels = 16;
    double expansion = 2.66;
    // Adds the per-sample grand mean of the GDFN output (context broadcasting).
    bool broadcast_context = true;

    void validate() const;
    std::size_t hidden() const;
};

template <class T>
struct Gdfn {
    FfnConfig cfg;
    LayerNorm<T> norm;
    Tensor<T> in_weight, in_bias;    // 1x1 conv C -> 2 hidden
    Tensor<T> dw_weight, dw_bias;    // depth-wise 3x3 on 2 hidden
    Tensor<T> out_weight, out_bias;  // 1x1 conv hidden -> C

    static Gdfn init(const FfnConfig& cfg, Rng& rng);
    // Plain gated feed-forward output, ignoring broadcast_context.
    Tensor<T> gated(const Tensor<T>& f) const;
    Tensor<T> forward(const Tensor<T>& f) const;
    void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

}  // namespace mxt
