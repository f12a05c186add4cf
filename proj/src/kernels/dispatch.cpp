#include <atomic>
#include <cstdlib>
#include <cstring>

#include "mnet/kernels.hpp"

namespace mnet::kernels {

namespace {

SimdLevel detect()
{
#if MNET_HAVE_AVX2_KERNELS
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return SimdLevel::Avx2;
#endif
    return SimdLevel::Scalar;
}

SimdLevel initial_level()
{
    SimdLevel level = detect();
    if (const char* env = std::getenv("MNET_SIMD")) {
        if (std::strcmp(env, "scalar") == 0)
            level = SimdLevel::Scalar;
        else if (std::strcmp(env, "avx2") == 0 && detect() == SimdLevel::Avx2)
            level = SimdLevel::Avx2;
        // "auto" or anything else keeps the detected level
    }
    return level;
}

std::atomic<SimdLevel> g_active{initial_level()};

bool use_avx2()
{
#if MNET_HAVE_AVX2_KERNELS
    return g_active.load(std::memory_order_relaxed) == SimdLevel::Avx2;
#else
    return false;
#endif
}

} // namespace

SimdLevel detected_simd_level() { return detect(); }

SimdLevel active_simd_level() { return g_active.load(std::memory_order_relaxed); }

void set_simd_level(SimdLevel level)
{
    if (level == SimdLevel::Avx2 && detect() != SimdLevel::Avx2)
        level = SimdLevel::Scalar;
    g_active.store(level, std::memory_order_relaxed);
}

const char* simd_level_name(SimdLevel level)
{
    switch (level) {
    case SimdLevel::Avx2:
        return "avx2";
    case SimdLevel::Scalar:
    default:
        return "scalar";
    }
}

// ---- double: always the scalar reference ----

template <>
void conv3d_forward<double>(const double* x, const double* w, const double* b, double* y,
                            const ConvGeom& g)
{
    scalar::conv3d_forward(x, w, b, y, g);
}
template <>
void conv3d_backward_input<double>(const double* gy, const double* w, double* gx,
                                   const ConvGeom& g)
{
    scalar::conv3d_backward_input(gy, w, gx, g);
}
template <>
void conv3d_backward_weight<double>(const double* x, const double* gy, double* gw,
                                    const ConvGeom& g)
{
    scalar::conv3d_backward_weight(x, gy, gw, g);
}
template <>
void conv3d_backward_bias<double>(const double* gy, double* gb, const ConvGeom& g)
{
    scalar::conv3d_backward_bias(gy, gb, g);
}
template <>
void instnorm_forward<double>(const double* x, const double* gamma, const double* beta,
                              double eps, double* y, double* mean, double* invstd,
                              const NormGeom& g)
{
    scalar::instnorm_forward(x, gamma, beta, eps, y, mean, invstd, g);
}
template <>
void leaky_relu_forward<double>(const double* x, double slope, double* y, int64_t count)
{
    scalar::leaky_relu_forward(x, slope, y, count);
}
template <>
void leaky_relu_backward<double>(const double* x, const double* gy, double slope,
                                 double* gx, int64_t count)
{
    scalar::leaky_relu_backward(x, gy, slope, gx, count);
}
template <>
void add<double>(const double* a, const double* b, double* y, int64_t count)
{
    scalar::add(a, b, y, count);
}
template <>
void sub<double>(const double* a, const double* b, double* y, int64_t count)
{
    scalar::sub(a, b, y, count);
}
template <>
void abs_val<double>(const double* x, double* y, int64_t count)
{
    scalar::abs_val(x, y, count);
}
template <>
void abs_backward<double>(const double* x, const double* gy, double* gx, int64_t count)
{
    scalar::abs_backward(x, gy, gx, count);
}
template <>
void axpy<double>(double alpha, const double* x, double* y, int64_t count)
{
    scalar::axpy(alpha, x, y, count);
}
template <>
double reduce_sum<double>(const double* x, int64_t count)
{
    return scalar::reduce_sum(x, count);
}

// ---- float: SIMD variant when active ----

template <>
void conv3d_forward<float>(const float* x, const float* w, const float* b, float* y,
                           const ConvGeom& g)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::conv3d_forward(x, w, b, y, g);
#endif
    scalar::conv3d_forward(x, w, b, y, g);
}
template <>
void conv3d_backward_input<float>(const float* gy, const float* w, float* gx,
                                  const ConvGeom& g)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::conv3d_backward_input(gy, w, gx, g);
#endif
    scalar::conv3d_backward_input(gy, w, gx, g);
}
template <>
void conv3d_backward_weight<float>(const float* x, const float* gy, float* gw,
                                   const ConvGeom& g)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::conv3d_backward_weight(x, gy, gw, g);
#endif
    scalar::conv3d_backward_weight(x, gy, gw, g);
}
template <>
void conv3d_backward_bias<float>(const float* gy, float* gb, const ConvGeom& g)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::conv3d_backward_bias(gy, gb, g);
#endif
    scalar::conv3d_backward_bias(gy, gb, g);
}
template <>
void instnorm_forward<float>(const float* x, const float* gamma, const float* beta,
                             float eps, float* y, float* mean, float* invstd,
                             const NormGeom& g)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::instnorm_forward(x, gamma, beta, eps, y, mean, invstd, g);
#endif
    scalar::instnorm_forward(x, gamma, beta, eps, y, mean, invstd, g);
}
template <>
void leaky_relu_forward<float>(const float* x, float slope, float* y, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::leaky_relu_forward(x, slope, y, count);
#endif
    scalar::leaky_relu_forward(x, slope, y, count);
}
template <>
void leaky_relu_backward<float>(const float* x, const float* gy, float slope, float* gx,
                                int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::leaky_relu_backward(x, gy, slope, gx, count);
#endif
    scalar::leaky_relu_backward(x, gy, slope, gx, count);
}
template <>
void add<float>(const float* a, const float* b, float* y, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::add(a, b, y, count);
#endif
    scalar::add(a, b, y, count);
}
template <>
void sub<float>(const float* a, const float* b, float* y, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::sub(a, b, y, count);
#endif
    scalar::sub(a, b, y, count);
}
template <>
void abs_val<float>(const float* x, float* y, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::abs_val(x, y, count);
#endif
    scalar::abs_val(x, y, count);
}
template <>
void abs_backward<float>(const float* x, const float* gy, float* gx, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::abs_backward(x, gy, gx, count);
#endif
    scalar::abs_backward(x, gy, gx, count);
}
template <>
void axpy<float>(float alpha, const float* x, float* y, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::axpy(alpha, x, y, count);
#endif
    scalar::axpy(alpha, x, y, count);
}
template <>
float reduce_sum<float>(const float* x, int64_t count)
{
#if MNET_HAVE_AVX2_KERNELS
    if (use_avx2())
        return avx2::reduce_sum(x, count);
#endif
    return scalar::reduce_sum(x, count);
}

// ---- ops without SIMD variants: scalar for both precisions ----

template <typename T>
void maxpool3d_forward(const T* x, T* y, int64_t* argmax, const PoolGeom& g)
{
    scalar::maxpool3d_forward(x, y, argmax, g);
}
template <typename T>
void maxpool3d_backward(const T* gy, const int64_t* argmax, T* gx, const PoolGeom& g)
{
    scalar::maxpool3d_backward(gy, argmax, gx, g);
}
template <typename T>
void upsample3d_forward(const T* x, T* y, const ResizeGeom& g)
{
    scalar::upsample3d_forward(x, y, g);
}
template <typename T>
void upsample3d_backward(const T* gy, T* gx, const ResizeGeom& g)
{
    scalar::upsample3d_backward(gy, gx, g);
}
template <typename T>
void instnorm_backward(const T* x, const T* gamma, const T* mean, const T* invstd,
                       const T* gy, T* gx, T* ggamma, T* gbeta, const NormGeom& g)
{
    scalar::instnorm_backward(x, gamma, mean, invstd, gy, gx, ggamma, gbeta, g);
}
template <typename T>
void softmax_channels_forward(const T* x, T* y, int64_t n, int64_t c, int64_t m)
{
    scalar::softmax_channels_forward(x, y, n, c, m);
}
template <typename T>
void softmax_channels_backward(const T* y, const T* gy, T* gx, int64_t n, int64_t c,
                               int64_t m)
{
    scalar::softmax_channels_backward(y, gy, gx, n, c, m);
}

#define MNET_INSTANTIATE_PASSTHROUGH(T)                                                  \
    template void maxpool3d_forward<T>(const T*, T*, int64_t*, const PoolGeom&);         \
    template void maxpool3d_backward<T>(const T*, const int64_t*, T*, const PoolGeom&);  \
    template void upsample3d_forward<T>(const T*, T*, const ResizeGeom&);                \
    template void upsample3d_backward<T>(const T*, T*, const ResizeGeom&);               \
    template void instnorm_backward<T>(const T*, const T*, const T*, const T*, const T*, \
                                       T*, T*, T*, const NormGeom&);                     \
    template void softmax_channels_forward<T>(const T*, T*, int64_t, int64_t, int64_t);  \
    template void softmax_channels_backward<T>(const T*, const T*, T*, int64_t, int64_t, \
                                               int64_t);

MNET_INSTANTIATE_PASSTHROUGH(float)
MNET_INSTANTIATE_PASSTHROUGH(double)

#undef MNET_INSTANTIATE_PASSTHROUGH

} // namespace mnet::kernels
