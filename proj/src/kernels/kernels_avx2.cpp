// AVX2/FMA float kernels. This translation unit is compiled with
// -mavx2 -mfma; callers must go through the dispatch table so the code only
// runs on CPUs that support it.

#include "mnet/kernels.hpp"

#if MNET_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mnet/threading.hpp"

namespace mnet::kernels::avx2 {

namespace {

inline void tap_range(int64_t k, int64_t pad, int64_t in_extent, int64_t out_extent,
                      int64_t& lo, int64_t& hi)
{
    lo = std::max<int64_t>(0, pad - k);
    hi = std::min<int64_t>(out_extent, in_extent + pad - k);
}

inline float hsum(__m256 v)
{
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehl_ps(lo, lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_shuffle_ps(lo, lo, 0x1);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
}

// acc[lo..hi) += xs[lo..hi) * wv
inline void fma_row(float* acc, const float* xs, float wv, int64_t lo, int64_t hi)
{
    const __m256 w8 = _mm256_set1_ps(wv);
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        const __m256 a = _mm256_loadu_ps(acc + i);
        const __m256 x8 = _mm256_loadu_ps(xs + i);
        _mm256_storeu_ps(acc + i, _mm256_fmadd_ps(x8, w8, a));
    }
    for (; i < hi; ++i)
        acc[i] += xs[i] * wv;
}

} // namespace

void conv3d_forward(const float* x, const float* w, const float* bias, float* y,
                    const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.n * g.cout, [&](int64_t begin, int64_t end) {
        std::vector<float> acc(static_cast<size_t>(g.ow));
        for (int64_t job = begin; job < end; ++job) {
            const int64_t ni = job / g.cout;
            const int64_t co = job % g.cout;
            const float* xn = x + ni * g.cin * in_slice;
            const float* wc = w + co * g.cin * g.kernel_size();
            float* yo = y + (ni * g.cout + co) * out_slice;
            for (int64_t oz = 0; oz < g.od; ++oz)
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    std::fill(acc.begin(), acc.end(), bias ? bias[co] : 0.0f);
                    for (int64_t ci = 0; ci < g.cin; ++ci)
                        for (int64_t kz = 0; kz < g.kd; ++kz) {
                            const int64_t iz = oz - g.pz + kz;
                            if (iz < 0 || iz >= g.d)
                                continue;
                            for (int64_t ky = 0; ky < g.kh; ++ky) {
                                const int64_t iy = oy - g.py + ky;
                                if (iy < 0 || iy >= g.h)
                                    continue;
                                const float* xrow =
                                    xn + ci * in_slice + (iz * g.h + iy) * g.w;
                                const float* wrow =
                                    wc + ((ci * g.kd + kz) * g.kh + ky) * g.kw;
                                for (int64_t kx = 0; kx < g.kw; ++kx) {
                                    int64_t lo, hi;
                                    tap_range(kx, g.px, g.w, g.ow, lo, hi);
                                    if (lo < hi)
                                        fma_row(acc.data(), xrow - g.px + kx, wrow[kx],
                                                lo, hi);
                                }
                            }
                        }
                    std::copy(acc.begin(), acc.end(), yo + (oz * g.oh + oy) * g.ow);
                }
        }
    });
}

void conv3d_backward_input(const float* gy, const float* w, float* gx, const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.n * g.cin, [&](int64_t begin, int64_t end) {
        std::vector<float> acc(static_cast<size_t>(g.w));
        for (int64_t job = begin; job < end; ++job) {
            const int64_t ni = job / g.cin;
            const int64_t ci = job % g.cin;
            float* gxs = gx + (ni * g.cin + ci) * in_slice;
            for (int64_t iz = 0; iz < g.d; ++iz)
                for (int64_t iy = 0; iy < g.h; ++iy) {
                    std::fill(acc.begin(), acc.end(), 0.0f);
                    for (int64_t co = 0; co < g.cout; ++co) {
                        const float* gys = gy + (ni * g.cout + co) * out_slice;
                        const float* wc = w + (co * g.cin + ci) * g.kernel_size();
                        for (int64_t kz = 0; kz < g.kd; ++kz) {
                            const int64_t oz = iz + g.pz - kz;
                            if (oz < 0 || oz >= g.od)
                                continue;
                            for (int64_t ky = 0; ky < g.kh; ++ky) {
                                const int64_t oy = iy + g.py - ky;
                                if (oy < 0 || oy >= g.oh)
                                    continue;
                                const float* gyrow = gys + (oz * g.oh + oy) * g.ow;
                                const float* wrow = wc + (kz * g.kh + ky) * g.kw;
                                for (int64_t kx = 0; kx < g.kw; ++kx) {
                                    const int64_t lo = std::max<int64_t>(0, kx - g.px);
                                    const int64_t hi =
                                        std::min<int64_t>(g.w, g.ow + kx - g.px);
                                    if (lo < hi)
                                        fma_row(acc.data(), gyrow + g.px - kx, wrow[kx],
                                                lo, hi);
                                }
                            }
                        }
                    }
                    float* gxrow = gxs + (iz * g.h + iy) * g.w;
                    int64_t i = 0;
                    for (; i + 8 <= g.w; i += 8)
                        _mm256_storeu_ps(gxrow + i,
                                         _mm256_add_ps(_mm256_loadu_ps(gxrow + i),
                                                       _mm256_loadu_ps(acc.data() + i)));
                    for (; i < g.w; ++i)
                        gxrow[i] += acc[static_cast<size_t>(i)];
                }
        }
    });
}

void conv3d_backward_weight(const float* x, const float* gy, float* gw, const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.cout, [&](int64_t begin, int64_t end) {
        for (int64_t co = begin; co < end; ++co) {
            float* gwc = gw + co * g.cin * g.kernel_size();
            for (int64_t ci = 0; ci < g.cin; ++ci)
                for (int64_t kz = 0; kz < g.kd; ++kz)
                    for (int64_t ky = 0; ky < g.kh; ++ky)
                        for (int64_t kx = 0; kx < g.kw; ++kx) {
                            int64_t lo, hi;
                            tap_range(kx, g.px, g.w, g.ow, lo, hi);
                            __m256 acc8 = _mm256_setzero_ps();
                            float tail = 0.0f;
                            for (int64_t ni = 0; ni < g.n; ++ni) {
                                const float* xs = x + (ni * g.cin + ci) * in_slice;
                                const float* gys = gy + (ni * g.cout + co) * out_slice;
                                for (int64_t oz = 0; oz < g.od; ++oz) {
                                    const int64_t iz = oz - g.pz + kz;
                                    if (iz < 0 || iz >= g.d)
                                        continue;
                                    for (int64_t oy = 0; oy < g.oh; ++oy) {
                                        const int64_t iy = oy - g.py + ky;
                                        if (iy < 0 || iy >= g.h)
                                            continue;
                                        const float* xrow =
                                            xs + (iz * g.h + iy) * g.w - g.px + kx;
                                        const float* gyrow =
                                            gys + (oz * g.oh + oy) * g.ow;
                                        int64_t ox = lo;
                                        for (; ox + 8 <= hi; ox += 8)
                                            acc8 = _mm256_fmadd_ps(
                                                _mm256_loadu_ps(xrow + ox),
                                                _mm256_loadu_ps(gyrow + ox), acc8);
                                        for (; ox < hi; ++ox)
                                            tail += xrow[ox] * gyrow[ox];
                                    }
                                }
                            }
                            gwc[((ci * g.kd + kz) * g.kh + ky) * g.kw + kx] +=
                                hsum(acc8) + tail;
                        }
        }
    });
}

void conv3d_backward_bias(const float* gy, float* gb, const ConvGeom& g)
{
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.cout, [&](int64_t begin, int64_t end) {
        for (int64_t co = begin; co < end; ++co) {
            __m256 acc8 = _mm256_setzero_ps();
            float tail = 0.0f;
            for (int64_t ni = 0; ni < g.n; ++ni) {
                const float* gys = gy + (ni * g.cout + co) * out_slice;
                int64_t i = 0;
                for (; i + 8 <= out_slice; i += 8)
                    acc8 = _mm256_add_ps(acc8, _mm256_loadu_ps(gys + i));
                for (; i < out_slice; ++i)
                    tail += gys[i];
            }
            gb[co] += hsum(acc8) + tail;
        }
    });
}

void instnorm_forward(const float* x, const float* gamma, const float* beta, float eps,
                      float* y, float* mean, float* invstd, const NormGeom& g)
{
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const int64_t ci = s % g.c;
            const float* xs = x + s * g.m;
            float* ys = y + s * g.m;
            __m256 sum8 = _mm256_setzero_ps();
            float sum_tail = 0.0f;
            int64_t i = 0;
            for (; i + 8 <= g.m; i += 8)
                sum8 = _mm256_add_ps(sum8, _mm256_loadu_ps(xs + i));
            for (; i < g.m; ++i)
                sum_tail += xs[i];
            const float mu = (hsum(sum8) + sum_tail) / static_cast<float>(g.m);

            const __m256 mu8 = _mm256_set1_ps(mu);
            __m256 var8 = _mm256_setzero_ps();
            float var_tail = 0.0f;
            for (i = 0; i + 8 <= g.m; i += 8) {
                const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xs + i), mu8);
                var8 = _mm256_fmadd_ps(d, d, var8);
            }
            for (; i < g.m; ++i) {
                const float d = xs[i] - mu;
                var_tail += d * d;
            }
            const float var = (hsum(var8) + var_tail) / static_cast<float>(g.m);
            const float istd = 1.0f / std::sqrt(var + eps);
            mean[s] = mu;
            invstd[s] = istd;

            const float a = gamma[ci] * istd;
            const float b = beta[ci] - mu * a;
            const __m256 a8 = _mm256_set1_ps(a);
            const __m256 b8 = _mm256_set1_ps(b);
            for (i = 0; i + 8 <= g.m; i += 8)
                _mm256_storeu_ps(ys + i,
                                 _mm256_fmadd_ps(_mm256_loadu_ps(xs + i), a8, b8));
            for (; i < g.m; ++i)
                ys[i] = xs[i] * a + b;
        }
    });
}

void leaky_relu_forward(const float* x, float slope, float* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        const __m256 zero = _mm256_setzero_ps();
        const __m256 s8 = _mm256_set1_ps(slope);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 v = _mm256_loadu_ps(x + i);
            const __m256 neg = _mm256_mul_ps(v, s8);
            const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GE_OQ);
            _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, v, mask));
        }
        for (; i < hi; ++i)
            y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
    });
}

void leaky_relu_backward(const float* x, const float* gy, float slope, float* gx,
                         int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        const __m256 zero = _mm256_setzero_ps();
        const __m256 s8 = _mm256_set1_ps(slope);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 v = _mm256_loadu_ps(x + i);
            const __m256 gv = _mm256_loadu_ps(gy + i);
            const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GE_OQ);
            const __m256 d = _mm256_blendv_ps(_mm256_mul_ps(gv, s8), gv, mask);
            _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), d));
        }
        for (; i < hi; ++i)
            gx[i] += x[i] >= 0.0f ? gy[i] : slope * gy[i];
    });
}

void add(const float* a, const float* b, float* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                                  _mm256_loadu_ps(b + i)));
        for (; i < hi; ++i)
            y[i] = a[i] + b[i];
    });
}

void sub(const float* a, const float* b, float* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                                  _mm256_loadu_ps(b + i)));
        for (; i < hi; ++i)
            y[i] = a[i] - b[i];
    });
}

void abs_val(const float* x, float* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        const __m256 sign_mask = _mm256_set1_ps(-0.0f);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i,
                             _mm256_andnot_ps(sign_mask, _mm256_loadu_ps(x + i)));
        for (; i < hi; ++i)
            y[i] = std::fabs(x[i]);
    });
}

void abs_backward(const float* x, const float* gy, float* gx, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        const __m256 zero = _mm256_setzero_ps();
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8) {
            const __m256 v = _mm256_loadu_ps(x + i);
            const __m256 gv = _mm256_loadu_ps(gy + i);
            const __m256 pos = _mm256_and_ps(_mm256_cmp_ps(v, zero, _CMP_GT_OQ), gv);
            const __m256 neg = _mm256_and_ps(_mm256_cmp_ps(v, zero, _CMP_LT_OQ), gv);
            const __m256 d = _mm256_sub_ps(pos, neg);
            _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), d));
        }
        for (; i < hi; ++i) {
            if (x[i] > 0.0f)
                gx[i] += gy[i];
            else if (x[i] < 0.0f)
                gx[i] -= gy[i];
        }
    });
}

void axpy(float alpha, const float* x, float* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        const __m256 a8 = _mm256_set1_ps(alpha);
        int64_t i = lo;
        for (; i + 8 <= hi; i += 8)
            _mm256_storeu_ps(y + i, _mm256_fmadd_ps(a8, _mm256_loadu_ps(x + i),
                                                    _mm256_loadu_ps(y + i)));
        for (; i < hi; ++i)
            y[i] += alpha * x[i];
    });
}

float reduce_sum(const float* x, int64_t count)
{
    __m256 acc = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= count; i += 8)
        acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float sum = hsum(acc);
    for (; i < count; ++i)
        sum += x[i];
    return sum;
}

} // namespace mnet::kernels::avx2

#endif // MNET_HAVE_AVX2_KERNELS
