#pragma once

#include "mxt/tensor.hpp"

namespace mxt::nn {

// x: (B,Cin,H,W); weight: (Cout, Cin/groups, kh, kw); bias: (Cout) or undefined.
// groups must be 1 (dense) or Cin == Cout (depth-wise).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0, std::size_t groups = 1);

// Normalizes over axis 1 of (B,C,H,W) at every spatial position.
template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              T eps = T(1e-6));
// Normalizes over the last axis.
template <class T>
Tensor<T> layer_norm_last(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-6));

// Window for output cell i is [floor(i*H/s), ceil((i+1)*H/s)); windows overlap
// or repeat when H is not a multiple of s or H < s.
template <class T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_side);

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

// Depth-wise causal convolution along the sequence axis of (B,L,C); weight
// (C,K), bias (C). Output t sees inputs t-K+1..t with zero left padding.
template <class T>
Tensor<T> causal_depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& weight,
                                  const Tensor<T>& bias);

// x: (..., in), weight: (in, out), bias: (out) or undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace mxt::nn
