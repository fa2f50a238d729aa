#pragma once

#include <vector>

#include "mxt/tensor.hpp"

namespace mxt {

enum class UnaryOp { exp, log, neg, silu, gelu, softplus, sqrt, sigmoid, tanh, abs, relu };
enum class BinaryOp { add, sub, mul, div };
enum class ReduceOp { sum, mean, max };

// Broadcast shape of two operands (right-aligned, extent-1 axes expand).
Shape broadcast_shape(const Shape& a, const Shape& b);

template <class T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& x);
template <class T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::div, a, b); }
template <class T> Tensor<T> exp(const Tensor<T>& x) { return elementwise(UnaryOp::exp, x); }
template <class T> Tensor<T> log(const Tensor<T>& x) { return elementwise(UnaryOp::log, x); }
template <class T> Tensor<T> neg(const Tensor<T>& x) { return elementwise(UnaryOp::neg, x); }
template <class T> Tensor<T> silu(const Tensor<T>& x) { return elementwise(UnaryOp::silu, x); }
template <class T> Tensor<T> gelu(const Tensor<T>& x) { return elementwise(UnaryOp::gelu, x); }
template <class T> Tensor<T> softplus(const Tensor<T>& x) { return elementwise(UnaryOp::softplus, x); }
template <class T> Tensor<T> sqrt(const Tensor<T>& x) { return elementwise(UnaryOp::sqrt, x); }
template <class T> Tensor<T> sigmoid(const Tensor<T>& x) { return elementwise(UnaryOp::sigmoid, x); }
template <class T> Tensor<T> tanh(const Tensor<T>& x) { return elementwise(UnaryOp::tanh, x); }
template <class T> Tensor<T> abs(const Tensor<T>& x) { return elementwise(UnaryOp::abs, x); }
template <class T> Tensor<T> relu(const Tensor<T>& x) { return elementwise(UnaryOp::relu, x); }

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
// y = scale * x + shift
template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift);

// Batched matrix product over the trailing two axes; leading axes broadcast.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Empty axes reduces over every axis. Max ties send the gradient to the
// lowest linear index.
template <class T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& x, std::vector<int> axes = {}, bool keepdims = false);
template <class T> Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes = {}, bool keepdims = false) { return reduce(ReduceOp::sum, x, std::move(axes), keepdims); }
template <class T> Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes = {}, bool keepdims = false) { return reduce(ReduceOp::mean, x, std::move(axes), keepdims); }
template <class T> Tensor<T> max(const Tensor<T>& x, std::vector<int> axes = {}, bool keepdims = false) { return reduce(ReduceOp::max, x, std::move(axes), keepdims); }

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// General axis permutation.
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
// Swaps two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::size_t>& sizes, int axis);
// Constant padding; before/after have one entry per axis.
template <class T>
Tensor<T> pad(const Tensor<T>& x, const std::vector<std::size_t>& before,
              const std::vector<std::size_t>& after, T value = T(0));
// Half-open [start, stop) per axis.
template <class T>
Tensor<T> slice(const Tensor<T>& x, const std::vector<std::size_t>& start,
                const std::vector<std::size_t>& stop);

}  // namespace mxt
