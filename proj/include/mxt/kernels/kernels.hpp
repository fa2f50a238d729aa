#pragma once

// Raw-buffer compute kernels. Each kernel has a plain serial reference under
// mxt::kernels::serial and an OpenMP implementation under mxt::kernels. The
// tensor ops call the OpenMP versions; tests and the benchmark compare both.

#include <cstddef>

namespace mxt::kernels {

struct Conv2dGeometry {
    std::size_t batch = 1, in_channels = 1, height = 1, width = 1;
    std::size_t out_channels = 1, kernel_h = 1, kernel_w = 1;
    std::size_t stride = 1, padding = 0;

    std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
};

// C[m x n] (+)= op(A) * op(B). A is m x k (k x m when trans_a), B is k x n
// (n x k when trans_b); all row-major and contiguous.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

// Dense convolution (groups = 1). weight is (Cout, Cin, kh, kw); bias may be null.
template <class T>
void conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias, T* y);
// Accumulates into any non-null gradient buffer.
template <class T>
void conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias);

// Depth-wise convolution: weight is (C, 1, kh, kw), out_channels == in_channels.
template <class T>
void depthwise_conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias,
                              T* y);
template <class T>
void depthwise_conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy,
                               T* dx, T* dweight, T* dbias);

namespace serial {

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);
template <class T>
void conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias, T* y);
template <class T>
void conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy, T* dx,
                     T* dweight, T* dbias);
template <class T>
void depthwise_conv2d_forward(const Conv2dGeometry& g, const T* x, const T* weight, const T* bias,
                              T* y);
template <class T>
void depthwise_conv2d_backward(const Conv2dGeometry& g, const T* x, const T* weight, const T* dy,
                               T* dx, T* dweight, T* dbias);

}  // namespace serial

}  // namespace mxt::kernels
