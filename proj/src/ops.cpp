#include "mxt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mxt/kernels/kernels.hpp"

namespace mxt {

namespace {

// Calls f(out_index, offset_a, offset_b) for every index of `shape`, where the
// offsets advance by the given per-axis strides (0 on broadcast axes).
template <class F>
void walk2(const Shape& shape, const std::vector<std::size_t>& sa,
           const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t n = numel(shape);
    if (n == 0) return;
    const std::size_t r = shape.size();
    if (r == 0) {
        f(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    const std::size_t inner = shape[r - 1], sai = sa[r - 1], sbi = sb[r - 1];
    for (std::size_t o = 0; o < n; o += inner) {
        for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * sai, ib + j * sbi);
        for (std::size_t d = r - 1; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < shape[d]) break;
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

// Strides of `operand` when viewed with the rank/extents of `out`.
std::vector<std::size_t> broadcast_strides(const Shape& operand, const Shape& out) {
    std::vector<std::size_t> s(out.size(), 0);
    const auto cs = contiguous_strides(operand);
    const std::size_t off = out.size() - operand.size();
    for (std::size_t i = 0; i < operand.size(); ++i)
        s[off + i] = operand[i] == 1 && out[off + i] != 1 ? 0 : cs[i];
    return s;
}

std::size_t norm_axis(int axis, std::size_t rank) {
    const long r = static_cast<long>(rank);
    const long a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

template <class T>
T softplus_value(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T sigmoid_value(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <class T, class Fwd, class Deriv>
Tensor<T> unary(const Tensor<T>& x, const char* name, Fwd fwd, Deriv deriv) {
    const auto in = x.values();
    std::vector<T> out(in.size());
    const long n = static_cast<long>(in.size());
#pragma omp parallel for simd schedule(static)
    for (long i = 0; i < n; ++i) out[i] = fwd(in[i]);
    return make_result<T>(x.shape(), std::move(out), {x}, name, [deriv](detail::Node<T>& self) {
        auto& src = *self.inputs[0];
        src.ensure_grad();
        const long m = static_cast<long>(self.data.size());
#pragma omp parallel for simd schedule(static)
        for (long i = 0; i < m; ++i) src.grad[i] += self.grad[i] * deriv(src.data[i], self.data[i]);
    });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        }
        out[i] = ea == 1 ? eb : ea;
    }
    return out;
}

template <class T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& x) {
    switch (op) {
        case UnaryOp::exp:
            return unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
        case UnaryOp::log:
            return unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
        case UnaryOp::neg:
            return unary(x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
        case UnaryOp::silu:
            return unary(
                x, "silu", [](T v) { return v * sigmoid_value(v); },
                [](T v, T) {
                    const T s = sigmoid_value(v);
                    return s * (T(1) + v * (T(1) - s));
                });
        case UnaryOp::gelu:
            return unary(
                x, "gelu",
                [](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2))); },
                [](T v, T) {
                    const T cdf = T(0.5) * (T(1) + std::erf(v * T(kInvSqrt2)));
                    return cdf + v * T(kInvSqrt2Pi) * std::exp(T(-0.5) * v * v);
                });
        case UnaryOp::softplus:
            return unary(x, "softplus", [](T v) { return softplus_value(v); },
                         [](T v, T) { return sigmoid_value(v); });
        case UnaryOp::sqrt:
            return unary(x, "sqrt", [](T v) { return std::sqrt(v); },
                         [](T, T y) { return T(0.5) / y; });
        case UnaryOp::sigmoid:
            return unary(x, "sigmoid", [](T v) { return sigmoid_value(v); },
                         [](T, T y) { return y * (T(1) - y); });
        case UnaryOp::tanh:
            return unary(x, "tanh", [](T v) { return std::tanh(v); },
                         [](T, T y) { return T(1) - y * y; });
        case UnaryOp::abs:
            return unary(x, "abs", [](T v) { return std::abs(v); },
                         [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
        case UnaryOp::relu:
            return unary(x, "relu", [](T v) { return v > 0 ? v : T(0); },
                         [](T v, T) { return v > 0 ? T(1) : T(0); });
    }
    throw ContractError("unknown unary op");
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return unary(x, "leaky_relu", [slope](T v) { return v > 0 ? v : slope * v; },
                 [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
    return unary(x, "affine", [scale, shift](T v) { return scale * v + shift; },
                 [scale](T, T) { return scale; });
}

template <class T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(numel(out_shape));
    const bool same = a.shape() == b.shape();
    auto apply = [op](T x, T y) -> T {
        switch (op) {
            case BinaryOp::add: return x + y;
            case BinaryOp::sub: return x - y;
            case BinaryOp::mul: return x * y;
            case BinaryOp::div: return x / y;
        }
        return T(0);
    };
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    if (same) {
        const long n = static_cast<long>(out.size());
#pragma omp parallel for simd schedule(static)
        for (long i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
    } else {
        walk2(out_shape, sa, sb,
              [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply(av[ia], bv[ib]); });
    }
    static constexpr const char* names[] = {"add", "sub", "mul", "div"};
    return make_result<T>(
        out_shape, std::move(out), {a, b}, names[static_cast<int>(op)],
        [op, out_shape, sa, sb, same](detail::Node<T>& self) {
            auto& na = *self.inputs[0];
            auto& nb = *self.inputs[1];
            const bool ga = na.requires_grad, gb = nb.requires_grad;
            if (ga) na.ensure_grad();
            if (gb) nb.ensure_grad();
            auto step = [&](std::size_t o, std::size_t ia, std::size_t ib) {
                const T g = self.grad[o];
                switch (op) {
                    case BinaryOp::add:
                        if (ga) na.grad[ia] += g;
                        if (gb) nb.grad[ib] += g;
                        break;
                    case BinaryOp::sub:
                        if (ga) na.grad[ia] += g;
                        if (gb) nb.grad[ib] -= g;
                        break;
                    case BinaryOp::mul:
                        if (ga) na.grad[ia] += g * nb.data[ib];
                        if (gb) nb.grad[ib] += g * na.data[ia];
                        break;
                    case BinaryOp::div: {
                        const T inv = T(1) / nb.data[ib];
                        if (ga) na.grad[ia] += g * inv;
                        if (gb) nb.grad[ib] -= g * na.data[ia] * inv * inv;
                        break;
                    }
                }
            };
            if (same) {
                const std::size_t n = self.grad.size();
                for (std::size_t i = 0; i < n; ++i) step(i, i, i);
            } else {
                walk2(out_shape, sa, sb, step);
            }
        });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) +
                             " and " + to_string(b.shape()));
    }
    const std::size_t m = a.shape()[a.rank() - 2], k = a.shape()[a.rank() - 1];
    const std::size_t k2 = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
    if (k != k2) {
        throw DimensionError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " +
                             to_string(b.shape()));
    }
    const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    const Shape lead = broadcast_shape(lead_a, lead_b);
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);

    // Batch offsets (in matrices) of each operand for every output batch.
    const std::size_t batches = numel(lead);
    std::vector<std::size_t> off_a(batches), off_b(batches);
    {
        const auto sa = broadcast_strides(lead_a, lead);
        const auto sb = broadcast_strides(lead_b, lead);
        walk2(lead, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            off_a[o] = ia;
            off_b[o] = ib;
        });
    }
    std::vector<T> out(batches * m * n);
    const T* ap = a.values().data();
    const T* bp = b.values().data();
    for (std::size_t i = 0; i < batches; ++i)
        kernels::gemm(false, false, m, n, k, ap + off_a[i] * m * k, bp + off_b[i] * k * n,
                      out.data() + i * m * n, false);

    return make_result<T>(out_shape, std::move(out), {a, b}, "matmul",
                          [=](detail::Node<T>& self) {
                              auto& na = *self.inputs[0];
                              auto& nb = *self.inputs[1];
                              if (na.requires_grad) na.ensure_grad();
                              if (nb.requires_grad) nb.ensure_grad();
                              for (std::size_t i = 0; i < batches; ++i) {
                                  const T* g = self.grad.data() + i * m * n;
                                  if (na.requires_grad)
                                      kernels::gemm(false, true, m, k, n, g,
                                                    nb.data.data() + off_b[i] * k * n,
                                                    na.grad.data() + off_a[i] * m * k, true);
                                  if (nb.requires_grad)
                                      kernels::gemm(true, false, k, n, m,
                                                    na.data.data() + off_a[i] * m * k, g,
                                                    nb.grad.data() + off_b[i] * k * n, true);
                              }
                          });
}

template <class T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& x, std::vector<int> axes, bool keepdims) {
    const std::size_t r = x.rank();
    std::vector<bool> reduced(r, axes.empty());
    for (int a : axes) reduced[norm_axis(a, r)] = true;

    Shape kept_shape(r);
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < r; ++i) {
        kept_shape[i] = reduced[i] ? 1 : x.shape()[i];
        if (reduced[i]) count *= x.shape()[i];
        if (!reduced[i] || keepdims) out_shape.push_back(kept_shape[i]);
    }
    if (op == ReduceOp::max && count == 0) {
        throw DimensionError("max over an empty axis of shape " + to_string(x.shape()));
    }
    // Map input index -> output offset.
    const auto in_strides = contiguous_strides(x.shape());
    auto out_strides = contiguous_strides(kept_shape);
    for (std::size_t i = 0; i < r; ++i)
        if (reduced[i]) out_strides[i] = 0;

    const auto in = x.values();
    const std::size_t out_n = numel(kept_shape);
    std::vector<T> out(out_n, T(0));
    std::vector<std::size_t> argmax;
    if (op == ReduceOp::max) {
        argmax.assign(out_n, static_cast<std::size_t>(-1));
        walk2(x.shape(), in_strides, out_strides, [&](std::size_t, std::size_t ia, std::size_t ob) {
            // Strict comparison keeps the first (lowest linear index) maximum.
            if (argmax[ob] == static_cast<std::size_t>(-1) || in[ia] > out[ob]) {
                out[ob] = in[ia];
                argmax[ob] = ia;
            }
        });
    } else {
        walk2(x.shape(), in_strides, out_strides,
              [&](std::size_t, std::size_t ia, std::size_t ob) { out[ob] += in[ia]; });
        if (op == ReduceOp::mean && count > 0) {
            const T inv = T(1) / static_cast<T>(count);
            for (auto& v : out) v *= inv;
        }
    }
    static constexpr const char* names[] = {"sum", "mean", "max"};
    const Shape in_shape = x.shape();
    return make_result<T>(
        out_shape, std::move(out), {x}, names[static_cast<int>(op)],
        [=, argmax = std::move(argmax)](detail::Node<T>& self) {
            auto& src = *self.inputs[0];
            src.ensure_grad();
            if (op == ReduceOp::max) {
                for (std::size_t o = 0; o < argmax.size(); ++o) src.grad[argmax[o]] += self.grad[o];
                return;
            }
            const T scale = op == ReduceOp::mean && count > 0 ? T(1) / static_cast<T>(count) : T(1);
            walk2(in_shape, in_strides, out_strides, [&](std::size_t, std::size_t ia, std::size_t ob) {
                src.grad[ia] += self.grad[ob] * scale;
            });
        });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const std::size_t ax = norm_axis(axis, x.rank());
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[ax];
    const auto in = x.values();
    for (T v : in) {
        if (std::isnan(v)) throw NumericError("softmax input contains NaN");
    }
    std::vector<T> out(in.size());
    const long rows = static_cast<long>(outer * inner);
#pragma omp parallel for schedule(static)
    for (long row = 0; row < rows; ++row) {
        const std::size_t o = static_cast<std::size_t>(row) / inner;
        const std::size_t i = static_cast<std::size_t>(row) % inner;
        const std::size_t base = o * len * inner + i;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
        T z = 0;
        for (std::size_t j = 0; j < len; ++j) {
            const T e = std::exp(in[base + j * inner] - mx);
            out[base + j * inner] = e;
            z += e;
        }
        const T invz = T(1) / z;
        for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= invz;
    }
    return make_result<T>(s, std::move(out), {x}, "softmax", [=](detail::Node<T>& self) {
        auto& src = *self.inputs[0];
        src.ensure_grad();
#pragma omp parallel for schedule(static)
        for (long row = 0; row < rows; ++row) {
            const std::size_t o = static_cast<std::size_t>(row) / inner;
            const std::size_t i = static_cast<std::size_t>(row) % inner;
            const std::size_t base = o * len * inner + i;
            T dot = 0;
            for (std::size_t j = 0; j < len; ++j)
                dot += self.grad[base + j * inner] * self.data[base + j * inner];
            for (std::size_t j = 0; j < len; ++j) {
                const std::size_t idx = base + j * inner;
                src.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
            }
        }
    });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
    }
    std::vector<T> out(x.values().begin(), x.values().end());
    return make_result<T>(std::move(shape), std::move(out), {x}, "reshape",
                          [](detail::Node<T>& self) {
                              auto& src = *self.inputs[0];
                              src.ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  src.grad[i] += self.grad[i];
                          });
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
    const std::size_t r = x.rank();
    if (perm.size() != r) throw DimensionError("permutation rank mismatch");
    std::vector<bool> seen(r, false);
    for (auto p : perm) {
        if (p >= r || seen[p]) throw DimensionError("invalid axis permutation");
        seen[p] = true;
    }
    Shape out_shape(r);
    const auto in_strides = contiguous_strides(x.shape());
    std::vector<std::size_t> gather(r);  // input stride for each output axis
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = x.shape()[perm[i]];
        gather[i] = in_strides[perm[i]];
    }
    const auto out_strides = contiguous_strides(out_shape);
    const auto in = x.values();
    std::vector<T> out(in.size());
    walk2(out_shape, out_strides, gather,
          [&](std::size_t o, std::size_t, std::size_t ia) { out[o] = in[ia]; });
    return make_result<T>(out_shape, std::move(out), {x}, "permute",
                          [=](detail::Node<T>& self) {
                              auto& src = *self.inputs[0];
                              src.ensure_grad();
                              walk2(out_shape, out_strides, gather,
                                    [&](std::size_t o, std::size_t, std::size_t ia) {
                                        src.grad[ia] += self.grad[o];
                                    });
                          });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
    std::vector<std::size_t> perm(x.rank());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::swap(perm[norm_axis(axis0, x.rank())], perm[norm_axis(axis1, x.rank())]);
    return permute(x, perm);
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const std::size_t r = parts[0].rank();
    const std::size_t ax = norm_axis(axis, r);
    Shape out_shape = parts[0].shape();
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw DimensionError("concat rank mismatch");
        for (std::size_t i = 0; i < r; ++i)
            if (i != ax && p.shape()[i] != parts[0].shape()[i])
                throw DimensionError("concat extent mismatch: " + to_string(p.shape()) + " vs " +
                                     to_string(parts[0].shape()));
        out_shape[ax] += p.shape()[ax];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= out_shape[i];
    for (std::size_t i = ax + 1; i < r; ++i) inner *= out_shape[i];
    const std::size_t out_row = out_shape[ax] * inner;
    std::vector<T> out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t row = p.shape()[ax] * inner;
        const auto v = p.values();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(v.begin() + o * row, v.begin() + (o + 1) * row, out.begin() + o * out_row + off);
        off += row;
    }
    return make_result<T>(out_shape, std::move(out), parts, "concat",
                          [=](detail::Node<T>& self) {
                              for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                  auto& src = *self.inputs[k];
                                  if (!src.requires_grad) continue;
                                  src.ensure_grad();
                                  const std::size_t row = src.shape[ax] * inner;
                                  for (std::size_t o = 0; o < outer; ++o)
                                      for (std::size_t j = 0; j < row; ++j)
                                          src.grad[o * row + j] += self.grad[o * out_row + offsets[k] + j];
                              }
                          });
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::size_t>& sizes, int axis) {
    const std::size_t ax = norm_axis(axis, x.rank());
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total != x.shape()[ax]) {
        throw DimensionError("split sizes sum to " + std::to_string(total) + " but axis extent is " +
                             std::to_string(x.shape()[ax]));
    }
    std::vector<Tensor<T>> out;
    std::size_t start = 0;
    for (auto s : sizes) {
        std::vector<std::size_t> lo(x.rank(), 0), hi = x.shape();
        lo[ax] = start;
        hi[ax] = start + s;
        out.push_back(slice(x, lo, hi));
        start += s;
    }
    return out;
}

template <class T>
Tensor<T> pad(const Tensor<T>& x, const std::vector<std::size_t>& before,
              const std::vector<std::size_t>& after, T value) {
    const std::size_t r = x.rank();
    if (before.size() != r || after.size() != r) throw DimensionError("pad needs one entry per axis");
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[i] + before[i] + after[i];
    const auto out_strides = contiguous_strides(out_shape);
    std::size_t base = 0;
    for (std::size_t i = 0; i < r; ++i) base += before[i] * out_strides[i];
    const auto in_strides = contiguous_strides(x.shape());
    std::vector<T> out(numel(out_shape), value);
    const auto in = x.values();
    walk2(x.shape(), in_strides, out_strides,
          [&](std::size_t, std::size_t ia, std::size_t ob) { out[base + ob] = in[ia]; });
    const Shape in_shape = x.shape();
    return make_result<T>(out_shape, std::move(out), {x}, "pad", [=](detail::Node<T>& self) {
        auto& src = *self.inputs[0];
        src.ensure_grad();
        walk2(in_shape, in_strides, out_strides, [&](std::size_t, std::size_t ia, std::size_t ob) {
            src.grad[ia] += self.grad[base + ob];
        });
    });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, const std::vector<std::size_t>& start,
                const std::vector<std::size_t>& stop) {
    const std::size_t r = x.rank();
    if (start.size() != r || stop.size() != r) throw DimensionError("slice needs one range per axis");
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (start[i] > stop[i] || stop[i] > x.shape()[i]) {
            throw DimensionError("slice range out of bounds for shape " + to_string(x.shape()));
        }
        out_shape[i] = stop[i] - start[i];
    }
    const auto in_strides = contiguous_strides(x.shape());
    std::size_t base = 0;
    for (std::size_t i = 0; i < r; ++i) base += start[i] * in_strides[i];
    const auto out_strides = contiguous_strides(out_shape);
    std::vector<T> out(numel(out_shape));
    const auto in = x.values();
    walk2(out_shape, out_strides, in_strides,
          [&](std::size_t o, std::size_t, std::size_t ia) { out[o] = in[base + ia]; });
    return make_result<T>(out_shape, std::move(out), {x}, "slice", [=](detail::Node<T>& self) {
        auto& src = *self.inputs[0];
        src.ensure_grad();
        walk2(out_shape, out_strides, in_strides, [&](std::size_t o, std::size_t, std::size_t ia) {
            src.grad[base + ia] += self.grad[o];
        });
    });
}

#define MXT_INSTANTIATE_OPS(T)                                                                   \
    template Tensor<T> elementwise(UnaryOp, const Tensor<T>&);                                   \
    template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                          \
    template Tensor<T> affine(const Tensor<T>&, T, T);                                           \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> reduce(ReduceOp, const Tensor<T>&, std::vector<int>, bool);               \
    template Tensor<T> softmax(const Tensor<T>&, int);                                           \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);               \
    template Tensor<T> transpose(const Tensor<T>&, int, int);                                    \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                               \
    template std::vector<Tensor<T>> split(const Tensor<T>&, const std::vector<std::size_t>&, int); \
    template Tensor<T> pad(const Tensor<T>&, const std::vector<std::size_t>&,                    \
                           const std::vector<std::size_t>&, T);                                  \
    template Tensor<T> slice(const Tensor<T>&, const std::vector<std::size_t>&,                  \
                             const std::vector<std::size_t>&);

MXT_INSTANTIATE_OPS(float)
MXT_INSTANTIATE_OPS(double)

}  // namespace mxt
