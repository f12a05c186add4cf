#pragma once

#include <cstdint>

#include "mnet/simd.hpp"

// Low-level numeric kernels behind the tensor ops. The public entry points
// route float work through the active SIMD variant and everything else
// through the scalar reference implementations in kernels::scalar. Backward
// kernels accumulate (+=) into their gradient outputs.
//
// Reductions run in a fixed order per implementation and parallel chunks
// only ever write disjoint ranges, so results are independent of the thread
// count.

namespace mnet::kernels {

struct ConvGeom {
    int64_t n = 1, cin = 1, cout = 1;
    int64_t d = 1, h = 1, w = 1;    // input spatial extents (z, y, x)
    int64_t kd = 1, kh = 1, kw = 1; // kernel extents
    int64_t pz = 0, py = 0, px = 0; // zero padding per spatial axis
    int64_t od = 1, oh = 1, ow = 1; // output spatial extents

    int64_t in_slice() const { return d * h * w; }
    int64_t out_slice() const { return od * oh * ow; }
    int64_t kernel_size() const { return kd * kh * kw; }
};

struct PoolGeom {
    int64_t n = 1, c = 1;
    int64_t d = 1, h = 1, w = 1;
    int64_t wz = 1, wy = 1, wx = 1; // window == stride
    int64_t od = 1, oh = 1, ow = 1;
};

struct ResizeGeom {
    int64_t n = 1, c = 1;
    int64_t d = 1, h = 1, w = 1;    // source spatial extents
    int64_t od = 1, oh = 1, ow = 1; // target spatial extents
};

struct NormGeom {
    int64_t n = 1, c = 1;
    int64_t m = 1; // voxels per (n, c) slice
};

// ---- public entry points (dispatching) ----

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeom& g);
template <typename T>
void conv3d_backward_input(const T* gy, const T* w, T* gx, const ConvGeom& g);
template <typename T>
void conv3d_backward_weight(const T* x, const T* gy, T* gw, const ConvGeom& g);
template <typename T>
void conv3d_backward_bias(const T* gy, T* gb, const ConvGeom& g);

template <typename T>
void maxpool3d_forward(const T* x, T* y, int64_t* argmax, const PoolGeom& g);
template <typename T>
void maxpool3d_backward(const T* gy, const int64_t* argmax, T* gx, const PoolGeom& g);

// Half-pixel-offset coordinate mapping, edge clamped.
template <typename T>
void upsample3d_forward(const T* x, T* y, const ResizeGeom& g);
template <typename T>
void upsample3d_backward(const T* gy, T* gx, const ResizeGeom& g);

// Saves per-slice mean and 1/sqrt(var + eps) for the backward pass.
template <typename T>
void instnorm_forward(const T* x, const T* gamma, const T* beta, T eps, T* y,
                      T* mean, T* invstd, const NormGeom& g);
template <typename T>
void instnorm_backward(const T* x, const T* gamma, const T* mean, const T* invstd,
                       const T* gy, T* gx, T* ggamma, T* gbeta, const NormGeom& g);

template <typename T>
void leaky_relu_forward(const T* x, T slope, T* y, int64_t count);
template <typename T>
void leaky_relu_backward(const T* x, const T* gy, T slope, T* gx, int64_t count);

template <typename T>
void add(const T* a, const T* b, T* y, int64_t count);
template <typename T>
void sub(const T* a, const T* b, T* y, int64_t count);
template <typename T>
void abs_val(const T* x, T* y, int64_t count);
// gx += sign(x) * gy, with sign(0) = 0
template <typename T>
void abs_backward(const T* x, const T* gy, T* gx, int64_t count);
// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t count);
template <typename T>
T reduce_sum(const T* x, int64_t count);

// Channel softmax over layout (n, c, m) with channel stride m.
template <typename T>
void softmax_channels_forward(const T* x, T* y, int64_t n, int64_t c, int64_t m);
template <typename T>
void softmax_channels_backward(const T* y, const T* gy, T* gx, int64_t n, int64_t c, int64_t m);

// ---- scalar reference implementations ----

namespace scalar {

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeom& g);
template <typename T>
void conv3d_backward_input(const T* gy, const T* w, T* gx, const ConvGeom& g);
template <typename T>
void conv3d_backward_weight(const T* x, const T* gy, T* gw, const ConvGeom& g);
template <typename T>
void conv3d_backward_bias(const T* gy, T* gb, const ConvGeom& g);

template <typename T>
void maxpool3d_forward(const T* x, T* y, int64_t* argmax, const PoolGeom& g);
template <typename T>
void maxpool3d_backward(const T* gy, const int64_t* argmax, T* gx, const PoolGeom& g);

template <typename T>
void upsample3d_forward(const T* x, T* y, const ResizeGeom& g);
template <typename T>
void upsample3d_backward(const T* gy, T* gx, const ResizeGeom& g);

template <typename T>
void instnorm_forward(const T* x, const T* gamma, const T* beta, T eps, T* y,
                      T* mean, T* invstd, const NormGeom& g);
template <typename T>
void instnorm_backward(const T* x, const T* gamma, const T* mean, const T* invstd,
                       const T* gy, T* gx, T* ggamma, T* gbeta, const NormGeom& g);

template <typename T>
void leaky_relu_forward(const T* x, T slope, T* y, int64_t count);
template <typename T>
void leaky_relu_backward(const T* x, const T* gy, T slope, T* gx, int64_t count);

template <typename T>
void add(const T* a, const T* b, T* y, int64_t count);
template <typename T>
void sub(const T* a, const T* b, T* y, int64_t count);
template <typename T>
void abs_val(const T* x, T* y, int64_t count);
template <typename T>
void abs_backward(const T* x, const T* gy, T* gx, int64_t count);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t count);
template <typename T>
T reduce_sum(const T* x, int64_t count);

template <typename T>
void softmax_channels_forward(const T* x, T* y, int64_t n, int64_t c, int64_t m);
template <typename T>
void softmax_channels_backward(const T* y, const T* gy, T* gx, int64_t n, int64_t c, int64_t m);

} // namespace scalar

// ---- AVX2 variants (float only, compiled on x86-64) ----

#if defined(__x86_64__) || defined(_M_X64)
#define MNET_HAVE_AVX2_KERNELS 1
namespace avx2 {

void conv3d_forward(const float* x, const float* w, const float* bias, float* y, const ConvGeom& g);
void conv3d_backward_input(const float* gy, const float* w, float* gx, const ConvGeom& g);
void conv3d_backward_weight(const float* x, const float* gy, float* gw, const ConvGeom& g);
void conv3d_backward_bias(const float* gy, float* gb, const ConvGeom& g);

void instnorm_forward(const float* x, const float* gamma, const float* beta, float eps,
                      float* y, float* mean, float* invstd, const NormGeom& g);

void leaky_relu_forward(const float* x, float slope, float* y, int64_t count);
void leaky_relu_backward(const float* x, const float* gy, float slope, float* gx, int64_t count);

void add(const float* a, const float* b, float* y, int64_t count);
void sub(const float* a, const float* b, float* y, int64_t count);
void abs_val(const float* x, float* y, int64_t count);
void abs_backward(const float* x, const float* gy, float* gx, int64_t count);
void axpy(float alpha, const float* x, float* y, int64_t count);
float reduce_sum(const float* x, int64_t count);

} // namespace avx2
#else
#define MNET_HAVE_AVX2_KERNELS 0
#endif

} // namespace mnet::kernels
