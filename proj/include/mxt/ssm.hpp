#pragma once

// Selective state-space model: diagonal continuous-time dynamics
//   h'(t) = A h(t) + B x(t),  y(t) = C h(t)
// discretized with a zero-order hold per time step,
//   a_bar = exp(delta * a),  b_bar = (exp(delta * a) - 1) / a * b,
// and run as the recurrence h_t = a_bar h_{t-1} + b_bar x_t, y_t = C_t h_t.
// delta, B and C are functions of the input (selective parameterization).

#include <cmath>
#include <span>
#include <vector>

#include "mxt/rng.hpp"
#include "mxt/tensor.hpp"

namespace mxt::ssm {

// Below this |delta * a| the hold factor uses its Taylor series.
inline constexpr double kSeriesThreshold = 1e-8;

enum class StepPolicy { strict, allow_zero };

template <class T>
struct ZohStep {
    T a_bar;
    T b_bar;
};

// Hold factor (exp(delta*a) - 1) / a and its partial derivatives.
template <class T>
struct HoldFactor {
    T decay;    // exp(delta * a)
    T hold;     // (exp(delta * a) - 1) / a
    T d_delta;  // d hold / d delta
    T d_a;      // d hold / d a
};

namespace detail {

// Below this |z| the derivative of the hold factor w.r.t. a uses its series;
// above it the closed form cancels at most a few digits.
template <class T>
constexpr T derivative_series_limit() {
    return sizeof(T) <= 4 ? T(0.1) : T(0.02);
}

// d hold / d a from z = delta * a and the already computed decay and hold:
//   delta^2 * (z e^z - expm1 z) / z^2 = (delta * decay - hold) / a
template <class T>
T hold_d_a(T a, T delta, T decay, T hold) {
    const T z = delta * a;
    if (std::abs(z) < derivative_series_limit<T>()) {
        const T g = T(1) / T(2) +
                    z * (T(1) / T(3) + z * (T(1) / T(8) + z * (T(1) / T(30) + z * (T(1) / T(144) + z / T(840)))));
        return delta * delta * g;
    }
    return (delta * decay - hold) / a;
}

template <class T>
T hold_from_expm1(T a, T delta, T em1) {
    const T z = delta * a;
    return std::abs(z) < T(kSeriesThreshold) ? delta * (T(1) + z * (T(0.5) + z / T(6))) : em1 / a;
}

// Vectorized exp and expm1 over n values of z.
template <class T>
void exp_expm1(const T* z, T* e, T* em1, std::size_t n);

}  // namespace detail

template <class T>
HoldFactor<T> hold_factor(T a, T delta) {
    const T z = delta * a;
    HoldFactor<T> f;
    f.decay = std::exp(z);
    f.d_delta = f.decay;
    f.hold = detail::hold_from_expm1(a, delta, std::expm1(z));
    f.d_a = detail::hold_d_a(a, delta, f.decay, f.hold);
    return f;
}

// Exact scalar zero-order hold for diagonal A. Throws ContractError for
// delta <= 0 unless the zero step is explicitly allowed.
template <class T>
ZohStep<T> discretize_zoh(T a, T b, T delta, StepPolicy policy = StepPolicy::strict) {
    if (!(delta > T(0))) {
        if (policy == StepPolicy::allow_zero && delta == T(0)) return {T(1), T(0)};
        throw ContractError("discretize_zoh requires delta > 0");
    }
    const auto f = hold_factor(a, delta);
    return {f.decay, f.hold * b};
}

// Raw views for one scan call. Layouts (row-major):
//   x, delta: (batch, length, channels)
//   a:        (channels, state)          negative entries
//   b, c:     (batch, length, state)
//   skip:     (channels) or empty
template <class T>
struct ScanProblem {
    std::size_t batch = 0, length = 0, channels = 0, state = 0;
    std::span<const T> x, delta, a, b, c, skip;

    void validate() const;
};

// Forward-pass values kept for the backward pass: hidden states and the
// per-step decay and hold factors, all laid out (batch, channels, length, state).
template <class T>
struct ScanSaved {
    std::vector<T> h, decay, hold;
    bool valid() const { return !h.empty() && h.size() == decay.size() && h.size() == hold.size(); }
};

template <class T>
struct ScanGradients {
    std::vector<T> x, delta, a, b, c, skip;
};

// Reference recurrence, one time step after another. Throws NumericError
// naming the first non-finite timestep.
template <class T>
void scan_sequential(const ScanProblem<T>& p, std::span<T> y, ScanSaved<T>* saved = nullptr);

// Same recurrence evaluated chunk by chunk: each chunk is summarized by the
// composed affine map (prod a, local state) and the carry is threaded through
// chunk boundaries in sequence order. Chunks run in parallel.
template <class T>
void scan_chunked(const ScanProblem<T>& p, std::size_t chunk_len, std::span<T> y);

// Gradients of sum(dy * y) w.r.t. every input of the scan.
template <class T>
ScanGradients<T> scan_backward(const ScanProblem<T>& p, std::span<const T> dy,
                               const ScanSaved<T>& saved);

// Learnable selective parameterization for `channels` sequences of state size N.
template <class T>
struct SsmParams {
    std::size_t channels = 0, state_dim = 0;
    Tensor<T> a_log;         // (channels, N); A = -exp(a_log)
    Tensor<T> delta_weight;  // (channels, channels)
    Tensor<T> delta_bias;    // (channels)
    Tensor<T> b_weight;      // (channels, N)
    Tensor<T> c_weight;      // (channels, N)
    Tensor<T> skip_d;        // (channels) when enabled

    static SsmParams init(std::size_t channels, std::size_t state_dim, bool use_skip, Rng& rng);
    Tensor<T> a() const;  // -exp(a_log)
};

// Per-timestep discretized parameters, materialized (no gradient tracking).
template <class T>
struct DiscreteParams {
    std::size_t batch = 0, length = 0, channels = 0, state = 0;
    std::vector<T> delta;  // (batch, length, channels)
    std::vector<T> a_bar;  // (batch, length, channels, state)
    std::vector<T> b_bar;  // (batch, length, channels, state), not multiplied by x
    std::vector<T> c;      // (batch, length, state)
};

template <class T>
DiscreteParams<T> selective_params(const Tensor<T>& x, const SsmParams<T>& params);

// Differentiable fused scan. skip may be undefined.
template <class T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                         const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& skip);

// Full selective SSM on x (batch, length, channels).
template <class T>
Tensor<T> selective_ssm(const Tensor<T>& x, const SsmParams<T>& params);

}  // namespace mxt::ssm
