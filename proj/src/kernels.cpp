#include "mxt/kernels/kernels.hpp"

#include <algorithm>
#include <vector>

namespace mxt::kernels {

namespace {

template <class T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
    return out;
}

// col is (Cin*kh*kw) x (Ho*Wo) for one image.
template <class T>
void im2col(const Conv2dGeometry& g, const T* x, T* col) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const long pad = static_cast<long>(g.padding);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const T* plane = x + ci * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                T* row = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= static_cast<long>(g.height)) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0)
                                                                                : src[ix];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const Conv2dGeometry& g, const T* col, T* dx) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const long pad = static_cast<long>(g.padding);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        T* plane = dx + ci * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const T* row = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.width;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                        if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Conv2dGeometry& g) {
    return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// Output-column range [lo, hi) whose input column ox*stride + k - pad is in bounds.
void valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t k,
                 std::size_t pad, std::size_t& lo, std::size_t& hi) {
    lo = 0;
    while (lo < out && static_cast<long>(lo * stride + k) - static_cast<long>(pad) < 0) ++lo;
    hi = out;
    while (hi > lo && static_cast<long>((hi - 1) * stride + k) - static_cast<long>(pad) >=
                          static_cast<long>(in))
        --hi;
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    std::vector<T> at;
    if (trans_a) {
        at = transposed(a, k, m);
        a = at.data();
    }
    std::vector<T> bt;
    if (trans_b) {
        bt = transposed(b, n, k);
        b = bt.data();
    }
    const long blocks = static_cast<long>((m + 3) / 4);
#pragma omp parallel for schedule(static)
    for (long blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
        const std::size_t rows = std::min<std::size_t>(4, m - i0);
        if (!accumulate) std::fill(c + i0 * n, c + (i0 + rows) * n, T(0));
        if (rows == 4) {
            T* c0 = c + i0 * n;
            T* c1 = c0 + n;
            T* c2 = c1 + n;
            T* c3 = c2 + n;
            const T* a0 = a + i0 * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
                const T* brow = b + p * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) {
                    const T bv = brow[j];
                    c0[j] += v0 * bv;
                    c1[j] += v1 * bv;
                    c2[j] += v2 * bv;
                    c3[j] += v3 * bv;
                }
            }
        } else {
            for (std::size_t i = i0; i < i0 + rows; ++i) {
                T* ci = c + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const T v = a[i * k + p];
                    const T* brow = b + p * n;
#pragma omp simd
                    for (std::size_t j = 0; j < n; ++j) ci[j] += v * brow[j];
                }
            }
        }
    }
}

template <class T>
void conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
    const std::size_t p = g.out_height() * g.out_width();
    const std::size_t ck = g.in_channels * g.kernel_h * g.kernel_w;
    std::vector<T> col(is_pointwise(g) ? 0 : ck * p);
    for (std::size_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.in_channels * g.height * g.width;
        T* yb = y + b * g.out_channels * p;
        const T* src = xb;
        if (!is_pointwise(g)) {
            im2col(g, xb, col.data());
            src = col.data();
        }
        gemm(false, false, g.out_channels, p, ck, weight, src, yb, false);
        if (bias) {
            for (std::size_t co = 0; co < g.out_channels; ++co) {
                T* row = yb + co * p;
                const T bv = bias[co];
                for (std::size_t j = 0; j < p; ++j) row[j] += bv;
            }
        }
    }
}

template <class T>
void conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias) {
    const std::size_t p = g.out_height() * g.out_width();
    const std::size_t ck = g.in_channels * g.kernel_h * g.kernel_w;
    const bool pw = is_pointwise(g);
    std::vector<T> col(pw ? 0 : ck * p), dcol(pw ? 0 : ck * p);
    for (std::size_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.in_channels * g.height * g.width;
        const T* dyb = dy + b * g.out_channels * p;
        if (dbias) {
            for (std::size_t co = 0; co < g.out_channels; ++co) {
                const T* row = dyb + co * p;
                T s = 0;
#pragma omp simd reduction(+ : s)
                for (std::size_t j = 0; j < p; ++j) s += row[j];
                dbias[co] += s;
            }
        }
        if (dweight) {
            const T* src = xb;
            if (!pw) {
                im2col(g, xb, col.data());
                src = col.data();
            }
            gemm(false, true, g.out_channels, ck, p, dyb, src, dweight, true);
        }
        if (dx) {
            T* dxb = dx + b * g.in_channels * g.height * g.width;
            if (pw) {
                gemm(true, false, ck, p, g.out_channels, weight, dyb, dxb, true);
            } else {
                gemm(true, false, ck, p, g.out_channels, weight, dyb, dcol.data(), false);
                col2im_add(g, dcol.data(), dxb);
            }
        }
    }
}

template <class T>
void depthwise_conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias,
                              T* y) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const std::size_t hw = g.height * g.width;
    const long planes = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < planes; ++bc) {
        const std::size_t c = static_cast<std::size_t>(bc) % g.in_channels;
        const T* src = x + static_cast<std::size_t>(bc) * hw;
        T* dst = y + static_cast<std::size_t>(bc) * ho * wo;
        std::fill(dst, dst + ho * wo, bias ? bias[c] : T(0));
        const T* w = weight + c * g.kernel_h * g.kernel_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            std::size_t ylo, yhi;
            valid_range(ho, g.height, g.stride, ky, g.padding, ylo, yhi);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const T wv = w[ky * g.kernel_w + kx];
                std::size_t xlo, xhi;
                valid_range(wo, g.width, g.stride, kx, g.padding, xlo, xhi);
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                    const std::size_t iy = oy * g.stride + ky - g.padding;
                    const T* srow = src + iy * g.width;
                    T* drow = dst + oy * wo;
                    if (g.stride == 1) {
#pragma omp simd
                        for (std::size_t ox = xlo; ox < xhi; ++ox)
                            drow[ox] += wv * srow[ox + kx - g.padding];
                    } else {
                        for (std::size_t ox = xlo; ox < xhi; ++ox)
                            drow[ox] += wv * srow[ox * g.stride + kx - g.padding];
                    }
                }
            }
        }
    }
}

template <class T>
void depthwise_conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy,
                               T* dx, T* dweight, T* dbias) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    const std::size_t hw = g.height * g.width;
    const std::size_t kk = g.kernel_h * g.kernel_w;
    if (dx) {
        const long planes = static_cast<long>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
        for (long bc = 0; bc < planes; ++bc) {
            const std::size_t c = static_cast<std::size_t>(bc) % g.in_channels;
            const T* grow = dy + static_cast<std::size_t>(bc) * ho * wo;
            T* dplane = dx + static_cast<std::size_t>(bc) * hw;
            const T* w = weight + c * kk;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                std::size_t ylo, yhi;
                valid_range(ho, g.height, g.stride, ky, g.padding, ylo, yhi);
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const T wv = w[ky * g.kernel_w + kx];
                    std::size_t xlo, xhi;
                    valid_range(wo, g.width, g.stride, kx, g.padding, xlo, xhi);
                    for (std::size_t oy = ylo; oy < yhi; ++oy) {
                        const std::size_t iy = oy * g.stride + ky - g.padding;
                        T* drow = dplane + iy * g.width;
                        const T* gr = grow + oy * wo;
                        if (g.stride == 1) {
#pragma omp simd
                            for (std::size_t ox = xlo; ox < xhi; ++ox)
                                drow[ox + kx - g.padding] += wv * gr[ox];
                        } else {
                            for (std::size_t ox = xlo; ox < xhi; ++ox)
                                drow[ox * g.stride + kx - g.padding] += wv * gr[ox];
                        }
                    }
                }
            }
        }
    }
    if (dweight || dbias) {
        const long channels = static_cast<long>(g.in_channels);
#pragma omp parallel for schedule(static)
        for (long cl = 0; cl < channels; ++cl) {
            const std::size_t c = static_cast<std::size_t>(cl);
            std::vector<T> lane(wo);
            for (std::size_t b = 0; b < g.batch; ++b) {
                const std::size_t bc = b * g.in_channels + c;
                const T* src = x + bc * hw;
                const T* grow = dy + bc * ho * wo;
                if (dbias) {
                    T s = 0;
#pragma omp simd reduction(+ : s)
                    for (std::size_t j = 0; j < ho * wo; ++j) s += grow[j];
                    dbias[c] += s;
                }
                if (!dweight) continue;
                for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                    std::size_t ylo, yhi;
                    valid_range(ho, g.height, g.stride, ky, g.padding, ylo, yhi);
                    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                        std::size_t xlo, xhi;
                        valid_range(wo, g.width, g.stride, kx, g.padding, xlo, xhi);
                        T s = 0;
                        if (g.stride == 1) {
                            std::fill(lane.begin(), lane.end(), T(0));
                            for (std::size_t oy = ylo; oy < yhi; ++oy) {
                                const T* sr = src + (oy + ky - g.padding) * g.width + kx - g.padding;
                                const T* gr = grow + oy * wo;
#pragma omp simd
                                for (std::size_t ox = xlo; ox < xhi; ++ox) lane[ox] += gr[ox] * sr[ox];
                            }
                            for (std::size_t ox = xlo; ox < xhi; ++ox) s += lane[ox];
                        } else {
                            for (std::size_t oy = ylo; oy < yhi; ++oy) {
                                const T* srow = src + (oy * g.stride + ky - g.padding) * g.width;
                                const T* gr = grow + oy * wo;
                                for (std::size_t ox = xlo; ox < xhi; ++ox)
                                    s += gr[ox] * srow[ox * g.stride + kx - g.padding];
                            }
                        }
                        dweight[c * kk + ky * g.kernel_w + kx] += s;
                    }
                }
            }
        }
    }
}

namespace serial {

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T s = 0;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = trans_a ? a[p * m + i] : a[i * k + p];
                const T bv = trans_b ? b[j * k + p] : b[p * n + j];
                s += av * bv;
            }
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

template <class T>
void conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    T s = bias ? bias[co] : T(0);
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const long iy = long(oy * g.stride + ky) - long(g.padding);
                                const long ix = long(ox * g.stride + kx) - long(g.padding);
                                if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width))
                                    continue;
                                s += weight[((co * g.in_channels + ci) * g.kernel_h + ky) *
                                                g.kernel_w + kx] *
                                     x[((b * g.in_channels + ci) * g.height + iy) * g.width + ix];
                            }
                    y[((b * g.out_channels + co) * ho + oy) * wo + ox] = s;
                }
}

template <class T>
void conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const T gv = dy[((b * g.out_channels + co) * ho + oy) * wo + ox];
                    if (dbias) dbias[co] += gv;
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const long iy = long(oy * g.stride + ky) - long(g.padding);
                                const long ix = long(ox * g.stride + kx) - long(g.padding);
                                if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width))
                                    continue;
                                const std::size_t wi =
                                    ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
                                const std::size_t xi =
                                    ((b * g.in_channels + ci) * g.height + iy) * g.width + ix;
                                if (dweight) dweight[wi] += gv * x[xi];
                                if (dx) dx[xi] += gv * weight[wi];
                            }
                }
}

template <class T>
void depthwise_conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias,
                              T* y) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    T s = bias ? bias[c] : T(0);
                    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                            const long iy = long(oy * g.stride + ky) - long(g.padding);
                            const long ix = long(ox * g.stride + kx) - long(g.padding);
                            if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width))
                                continue;
                            s += weight[(c * g.kernel_h + ky) * g.kernel_w + kx] *
                                 x[((b * g.in_channels + c) * g.height + iy) * g.width + ix];
                        }
                    y[((b * g.in_channels + c) * ho + oy) * wo + ox] = s;
                }
}

template <class T>
void depthwise_conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy,
                               T* dx, T* dweight, T* dbias) {
    const std::size_t ho = g.out_height(), wo = g.out_width();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const T gv = dy[((b * g.in_channels + c) * ho + oy) * wo + ox];
                    if (dbias) dbias[c] += gv;
                    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                            const long iy = long(oy * g.stride + ky) - long(g.padding);
                            const long ix = long(ox * g.stride + kx) - long(g.padding);
                            if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width))
                                continue;
                            const std::size_t wi = (c * g.kernel_h + ky) * g.kernel_w + kx;
                            const std::size_t xi =
                                ((b * g.in_channels + c) * g.height + iy) * g.width + ix;
                            if (dweight) dweight[wi] += gv * x[xi];
                            if (dx) dx[xi] += gv * weight[wi];
                        }
                }
}

}  // namespace serial

#define MXT_INSTANTIATE_KERNELS(NS, T)                                                          \
    template void NS::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*,      \
                              const T*, T*, bool);                                              \
    template void NS::conv2d_forward<T>(const Conv2dGeometry&, const T*, const T*, const T*,    \
                                        T*);                                                    \
    template void NS::conv2d_backward<T>(const Conv2dGeometry&, const T*, const T*, const T*,   \
                                         T*, T*, T*);                                           \
    template void NS::depthwise_conv2d_forward<T>(const Conv2dGeometry&, const T*, const T*,    \
                                                  const T*, T*);                                \
    template void NS::depthwise_conv2d_backward<T>(const Conv2dGeometry&, const T*, const T*,   \
                                                   const T*, T*, T*, T*);

MXT_INSTANTIATE_KERNELS(kernels, float)
MXT_INSTANTIATE_KERNELS(kernels, double)
MXT_INSTANTIATE_KERNELS(kernels::serial, float)
MXT_INSTANTIATE_KERNELS(kernels::serial, double)

}  // namespace mxt::kernels
