#include "mxt/nn_ops.hpp"

#include <cmath>

#include "mxt/kernels/kernels.hpp"

namespace mxt::nn {

namespace {

template <class T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* what) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) +
                             ", got " + to_string(x.shape()));
    }
}

// Layer norm over the middle axis of an (outer, C, inner) view.
template <class T>
Tensor<T> layer_norm_impl(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                          std::size_t outer, std::size_t channels, std::size_t inner) {
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw DimensionError("layer norm affine parameters need " + std::to_string(channels) +
                             " entries");
    }
    const auto in = x.values();
    const auto gm = gamma.values();
    const auto bt = beta.values();
    std::vector<T> out(in.size()), xhat(in.size()), rstd(outer * inner);
    const T inv_c = T(1) / static_cast<T>(channels);
    const long outer_l = static_cast<long>(outer);
#pragma omp parallel for schedule(static)
    for (long ol = 0; ol < outer_l; ++ol) {
        const std::size_t o = static_cast<std::size_t>(ol);
        const std::size_t base = o * channels * inner;
        std::vector<T> mu(inner, T(0)), var(inner, T(0));
        for (std::size_t c = 0; c < channels; ++c) {
            const T* row = in.data() + base + c * inner;
            for (std::size_t i = 0; i < inner; ++i) mu[i] += row[i];
        }
        for (auto& m : mu) m *= inv_c;
        for (std::size_t c = 0; c < channels; ++c) {
            const T* row = in.data() + base + c * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const T d = row[i] - mu[i];
                var[i] += d * d;
            }
        }
        T* rs = rstd.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) rs[i] = T(1) / std::sqrt(var[i] * inv_c + eps);
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = base + c * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const T h = (in[off + i] - mu[i]) * rs[i];
                xhat[off + i] = h;
                out[off + i] = h * gm[c] + bt[c];
            }
        }
    }
    return make_result<T>(
        x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
        [=, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
            auto& nx = *self.inputs[0];
            auto& ng = *self.inputs[1];
            auto& nb = *self.inputs[2];
            if (ng.requires_grad || nb.requires_grad) {
                ng.ensure_grad();
                nb.ensure_grad();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t off = (o * channels + c) * inner;
                        T sg = 0, sb = 0;
                        for (std::size_t i = 0; i < inner; ++i) {
                            sg += self.grad[off + i] * xhat[off + i];
                            sb += self.grad[off + i];
                        }
                        ng.grad[c] += sg;
                        nb.grad[c] += sb;
                    }
            }
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            const auto& gmv = ng.data;
#pragma omp parallel for schedule(static)
            for (long ol = 0; ol < static_cast<long>(outer); ++ol) {
                const std::size_t o = static_cast<std::size_t>(ol);
                std::vector<T> m1(inner, T(0)), m2(inner, T(0));
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t off = (o * channels + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        const T gy = self.grad[off + i] * gmv[c];
                        m1[i] += gy;
                        m2[i] += gy * xhat[off + i];
                    }
                }
                const T* rs = rstd.data() + o * inner;
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t off = (o * channels + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        const T gy = self.grad[off + i] * gmv[c];
                        nx.grad[off + i] +=
                            rs[i] * (gy - m1[i] * inv_c - xhat[off + i] * m2[i] * inv_c);
                    }
                }
            }
        });
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding, std::size_t groups) {
    require_rank(x, 4, "conv2d input");
    require_rank(weight, 4, "conv2d weight");
    kernels::Conv2dGeometry g;
    g.batch = x.shape()[0];
    g.in_channels = x.shape()[1];
    g.height = x.shape()[2];
    g.width = x.shape()[3];
    g.out_channels = weight.shape()[0];
    g.kernel_h = weight.shape()[2];
    g.kernel_w = weight.shape()[3];
    g.stride = stride;
    g.padding = padding;
    const bool depthwise = groups != 1;
    if (depthwise && (groups != g.in_channels || g.out_channels != g.in_channels)) {
        throw DimensionError("conv2d supports groups == 1 or depth-wise groups == channels");
    }
    if (weight.shape()[1] * groups != g.in_channels) {
        throw DimensionError("conv2d weight " + to_string(weight.shape()) +
                             " does not match input " + to_string(x.shape()));
    }
    if (bias.defined() && bias.numel() != g.out_channels) {
        throw DimensionError("conv2d bias size mismatch");
    }
    if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w || stride == 0) {
        throw DimensionError("conv2d kernel larger than padded input " + to_string(x.shape()));
    }
    Shape out_shape{g.batch, g.out_channels, g.out_height(), g.out_width()};
    std::vector<T> out(numel(out_shape));
    const T* bptr = bias.defined() ? bias.values().data() : nullptr;
    if (depthwise)
        kernels::depthwise_conv2d_forward(g, x.values().data(), weight.values().data(), bptr,
                                          out.data());
    else
        kernels::conv2d_forward(g, x.values().data(), weight.values().data(), bptr, out.data());

    const bool has_bias = bias.defined();
    std::vector<Tensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return make_result<T>(out_shape, std::move(out), inputs, depthwise ? "dwconv2d" : "conv2d",
                          [g, depthwise, has_bias](detail::Node<T>& self) {
                              auto& nx = *self.inputs[0];
                              auto& nw = *self.inputs[1];
                              T* dx = nullptr;
                              T* dw = nullptr;
                              T* db = nullptr;
                              if (nx.requires_grad) {
                                  nx.ensure_grad();
                                  dx = nx.grad.data();
                              }
                              if (nw.requires_grad) {
                                  nw.ensure_grad();
                                  dw = nw.grad.data();
                              }
                              if (has_bias && self.inputs[2]->requires_grad) {
                                  self.inputs[2]->ensure_grad();
                                  db = self.inputs[2]->grad.data();
                              }
                              if (depthwise)
                                  kernels::depthwise_conv2d_backward(g, nx.data.data(),
                                                                     nw.data.data(),
                                                                     self.grad.data(), dx, dw, db);
                              else
                                  kernels::conv2d_backward(g, nx.data.data(), nw.data.data(),
                                                           self.grad.data(), dx, dw, db);
                          });
}

template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              T eps) {
    require_rank(x, 4, "layer_norm_channels");
    const auto& s = x.shape();
    return layer_norm_impl(x, gamma, beta, eps, s[0], s[1], s[2] * s[3]);
}

template <class T>
Tensor<T> layer_norm_last(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps) {
    if (x.rank() == 0) throw DimensionError("layer_norm_last on a scalar");
    const std::size_t c = x.shape().back();
    return layer_norm_impl(x, gamma, beta, eps, c == 0 ? 0 : x.numel() / c, c, std::size_t{1});
}

template <class T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_side) {
    require_rank(x, 4, "adaptive_avg_pool2d");
    const std::size_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h == 0 || w == 0) throw DimensionError("adaptive_avg_pool2d on empty spatial extent");
    if (out_side == 0) throw DimensionError("adaptive_avg_pool2d output side must be >= 1");
    const std::size_t s = out_side;
    std::vector<std::size_t> y0(s), y1(s), x0(s), x1(s);
    for (std::size_t i = 0; i < s; ++i) {
        y0[i] = (i * h) / s;
        y1[i] = ((i + 1) * h + s - 1) / s;
        x0[i] = (i * w) / s;
        x1[i] = ((i + 1) * w + s - 1) / s;
    }
    Shape out_shape{b, c, s, s};
    std::vector<T> out(numel(out_shape));
    const auto in = x.values();
    for (std::size_t p = 0; p < b * c; ++p)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                T acc = 0;
                for (std::size_t yy = y0[i]; yy < y1[i]; ++yy)
                    for (std::size_t xx = x0[j]; xx < x1[j]; ++xx) acc += in[(p * h + yy) * w + xx];
                out[(p * s + i) * s + j] =
                    acc / static_cast<T>((y1[i] - y0[i]) * (x1[j] - x0[j]));
            }
    return make_result<T>(out_shape, std::move(out), {x}, "adaptive_avg_pool2d",
                          [=](detail::Node<T>& self) {
                              auto& src = *self.inputs[0];
                              src.ensure_grad();
                              for (std::size_t p = 0; p < b * c; ++p)
                                  for (std::size_t i = 0; i < s; ++i)
                                      for (std::size_t j = 0; j < s; ++j) {
                                          const T g = self.grad[(p * s + i) * s + j] /
                                                      static_cast<T>((y1[i] - y0[i]) * (x1[j] - x0[j]));
                                          for (std::size_t yy = y0[i]; yy < y1[i]; ++yy)
                                              for (std::size_t xx = x0[j]; xx < x1[j]; ++xx)
                                                  src.grad[(p * h + yy) * w + xx] += g;
                                      }
                          });
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    require_rank(x, 4, "upsample_nearest2x");
    const std::size_t p = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Shape out_shape{x.shape()[0], x.shape()[1], 2 * h, 2 * w};
    std::vector<T> out(numel(out_shape));
    const auto in = x.values();
    for (std::size_t q = 0; q < p; ++q)
        for (std::size_t yy = 0; yy < 2 * h; ++yy)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
                out[(q * 2 * h + yy) * 2 * w + xx] = in[(q * h + yy / 2) * w + xx / 2];
    return make_result<T>(out_shape, std::move(out), {x}, "upsample_nearest2x",
                          [=](detail::Node<T>& self) {
                              auto& src = *self.inputs[0];
                              src.ensure_grad();
                              for (std::size_t q = 0; q < p; ++q)
                                  for (std::size_t yy = 0; yy < 2 * h; ++yy)
                                      for (std::size_t xx = 0; xx < 2 * w; ++xx)
                                          src.grad[(q * h + yy / 2) * w + xx / 2] +=
                                              self.grad[(q * 2 * h + yy) * 2 * w + xx];
                          });
}

template <class T>
Tensor<T> causal_depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& weight,
                                  const Tensor<T>& bias) {
    require_rank(x, 3, "causal_depthwise_conv1d");
    require_rank(weight, 2, "causal_depthwise_conv1d weight");
    const std::size_t b = x.shape()[0], l = x.shape()[1], c = x.shape()[2];
    const std::size_t k = weight.shape()[1];
    if (weight.shape()[0] != c || bias.numel() != c) {
        throw DimensionError("causal conv1d parameters do not match " + std::to_string(c) +
                             " channels");
    }
    const auto in = x.values();
    const auto wv = weight.values();
    const auto bv = bias.values();
    std::vector<T> out(in.size());
    const long rows = static_cast<long>(b * l);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < rows; ++r) {
        const std::size_t bi = static_cast<std::size_t>(r) / l, t = static_cast<std::size_t>(r) % l;
        T* dst = out.data() + static_cast<std::size_t>(r) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = bv[ch];
        for (std::size_t j = 0; j < k; ++j) {
            if (t + j + 1 < k) continue;
            const std::size_t src_t = t + j + 1 - k;
            const T* src = in.data() + (bi * l + src_t) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wv[ch * k + j] * src[ch];
        }
    }
    return make_result<T>(
        x.shape(), std::move(out), {x, weight, bias}, "causal_dwconv1d", [=](detail::Node<T>& self) {
            auto& nx = *self.inputs[0];
            auto& nw = *self.inputs[1];
            auto& nb = *self.inputs[2];
            if (nx.requires_grad) nx.ensure_grad();
            if (nw.requires_grad) nw.ensure_grad();
            if (nb.requires_grad) nb.ensure_grad();
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t t = 0; t < l; ++t) {
                    const T* g = self.grad.data() + (bi * l + t) * c;
                    if (nb.requires_grad)
                        for (std::size_t ch = 0; ch < c; ++ch) nb.grad[ch] += g[ch];
                    for (std::size_t j = 0; j < k; ++j) {
                        if (t + j + 1 < k) continue;
                        const std::size_t off = (bi * l + t + j + 1 - k) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            if (nw.requires_grad) nw.grad[ch * k + j] += g[ch] * nx.data[off + ch];
                            if (nx.requires_grad) nx.grad[off + ch] += g[ch] * nw.data[ch * k + j];
                        }
                    }
                }
        });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require_rank(weight, 2, "linear weight");
    if (x.rank() == 0) throw DimensionError("linear on a scalar");
    const std::size_t in_f = weight.shape()[0], out_f = weight.shape()[1];
    if (x.shape().back() != in_f) {
        throw DimensionError("linear input " + to_string(x.shape()) + " does not match weight " +
                             to_string(weight.shape()));
    }
    if (bias.defined() && bias.numel() != out_f) throw DimensionError("linear bias size mismatch");
    const std::size_t rows = x.numel() / std::max<std::size_t>(in_f, 1);
    Shape out_shape = x.shape();
    out_shape.back() = out_f;
    std::vector<T> out(rows * out_f);
    kernels::gemm(false, false, rows, out_f, in_f, x.values().data(), weight.values().data(),
                  out.data(), false);
    if (bias.defined()) {
        const auto bv = bias.values();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out_f; ++j) out[r * out_f + j] += bv[j];
    }
    const bool has_bias = bias.defined();
    std::vector<Tensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return make_result<T>(out_shape, std::move(out), inputs, "linear", [=](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        if (nx.requires_grad) {
            nx.ensure_grad();
            kernels::gemm(false, true, rows, in_f, out_f, self.grad.data(), nw.data.data(),
                          nx.grad.data(), true);
        }
        if (nw.requires_grad) {
            nw.ensure_grad();
            kernels::gemm(true, false, in_f, out_f, rows, nx.data.data(), self.grad.data(),
                          nw.grad.data(), true);
        }
        if (has_bias && self.inputs[2]->requires_grad) {
            auto& nb = *self.inputs[2];
            nb.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < out_f; ++j) nb.grad[j] += self.grad[r * out_f + j];
        }
    });
}

#define MXT_INSTANTIATE_NN(T)                                                                     \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                              std::size_t, std::size_t);                                          \
    template Tensor<T> layer_norm_channels(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
    template Tensor<T> layer_norm_last(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
    template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, std::size_t);                        \
    template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                      \
    template Tensor<T> causal_depthwise_conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

MXT_INSTANTIATE_NN(float)
MXT_INSTANTIATE_NN(double)

}  // namespace mxt::nn
