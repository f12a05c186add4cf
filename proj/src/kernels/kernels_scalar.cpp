#include <algorithm>
#include <cmath>
#include <vector>

#include "mnet/kernels.hpp"
#include "mnet/threading.hpp"

namespace mnet::kernels::scalar {

namespace {

// Valid output-x range for a given kernel tap: y[ox] reads x[ox - px + kx].
inline void tap_range(int64_t k, int64_t pad, int64_t in_extent, int64_t out_extent,
                      int64_t& lo, int64_t& hi)
{
    lo = std::max<int64_t>(0, pad - k);
    hi = std::min<int64_t>(out_extent, in_extent + pad - k);
}

struct AxisSample {
    int64_t i0, i1;
    double w1;
};

// Half-pixel-offset source coordinate, clamped to [0, s-1].
inline double half_pixel_coord(int64_t t, int64_t src, int64_t dst)
{
    double c = (static_cast<double>(t) + 0.5) * static_cast<double>(src) /
                   static_cast<double>(dst) -
               0.5;
    if (c < 0.0)
        c = 0.0;
    const double last = static_cast<double>(src - 1);
    if (c > last)
        c = last;
    return c;
}

std::vector<AxisSample> axis_samples(int64_t src, int64_t dst)
{
    std::vector<AxisSample> s(static_cast<size_t>(dst));
    for (int64_t t = 0; t < dst; ++t) {
        const double c = half_pixel_coord(t, src, dst);
        const int64_t i0 = static_cast<int64_t>(c);
        s[static_cast<size_t>(t)].i0 = i0;
        s[static_cast<size_t>(t)].i1 = std::min(i0 + 1, src - 1);
        s[static_cast<size_t>(t)].w1 = c - static_cast<double>(i0);
    }
    return s;
}

} // namespace

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.n * g.cout, [&](int64_t begin, int64_t end) {
        std::vector<T> acc(static_cast<size_t>(g.ow));
        for (int64_t job = begin; job < end; ++job) {
            const int64_t ni = job / g.cout;
            const int64_t co = job % g.cout;
            const T* xn = x + ni * g.cin * in_slice;
            const T* wc = w + co * g.cin * g.kernel_size();
            T* yo = y + (ni * g.cout + co) * out_slice;
            for (int64_t oz = 0; oz < g.od; ++oz)
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    std::fill(acc.begin(), acc.end(), bias ? bias[co] : T(0));
                    for (int64_t ci = 0; ci < g.cin; ++ci)
                        for (int64_t kz = 0; kz < g.kd; ++kz) {
                            const int64_t iz = oz - g.pz + kz;
                            if (iz < 0 || iz >= g.d)
                                continue;
                            for (int64_t ky = 0; ky < g.kh; ++ky) {
                                const int64_t iy = oy - g.py + ky;
                                if (iy < 0 || iy >= g.h)
                                    continue;
                                const T* xrow = xn + ci * in_slice + (iz * g.h + iy) * g.w;
                                const T* wrow = wc + ((ci * g.kd + kz) * g.kh + ky) * g.kw;
                                for (int64_t kx = 0; kx < g.kw; ++kx) {
                                    const T wv = wrow[kx];
                                    int64_t lo, hi;
                                    tap_range(kx, g.px, g.w, g.ow, lo, hi);
                                    const T* xs = xrow - g.px + kx;
                                    for (int64_t ox = lo; ox < hi; ++ox)
                                        acc[static_cast<size_t>(ox)] += xs[ox] * wv;
                                }
                            }
                        }
                    T* yrow = yo + (oz * g.oh + oy) * g.ow;
                    for (int64_t ox = 0; ox < g.ow; ++ox)
                        yrow[ox] = acc[static_cast<size_t>(ox)];
                }
        }
    });
}

template <typename T>
void conv3d_backward_input(const T* gy, const T* w, T* gx, const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.n * g.cin, [&](int64_t begin, int64_t end) {
        std::vector<T> acc(static_cast<size_t>(g.w));
        for (int64_t job = begin; job < end; ++job) {
            const int64_t ni = job / g.cin;
            const int64_t ci = job % g.cin;
            T* gxs = gx + (ni * g.cin + ci) * in_slice;
            for (int64_t iz = 0; iz < g.d; ++iz)
                for (int64_t iy = 0; iy < g.h; ++iy) {
                    std::fill(acc.begin(), acc.end(), T(0));
                    for (int64_t co = 0; co < g.cout; ++co) {
                        const T* gys = gy + (ni * g.cout + co) * out_slice;
                        const T* wc = w + (co * g.cin + ci) * g.kernel_size();
                        for (int64_t kz = 0; kz < g.kd; ++kz) {
                            const int64_t oz = iz + g.pz - kz;
                            if (oz < 0 || oz >= g.od)
                                continue;
                            for (int64_t ky = 0; ky < g.kh; ++ky) {
                                const int64_t oy = iy + g.py - ky;
                                if (oy < 0 || oy >= g.oh)
                                    continue;
                                const T* gyrow = gys + (oz * g.oh + oy) * g.ow;
                                const T* wrow = wc + (kz * g.kh + ky) * g.kw;
                                for (int64_t kx = 0; kx < g.kw; ++kx) {
                                    const T wv = wrow[kx];
                                    // gx[ix] += gy[ix + px - kx] * w
                                    const int64_t lo = std::max<int64_t>(0, kx - g.px);
                                    const int64_t hi =
                                        std::min<int64_t>(g.w, g.ow + kx - g.px);
                                    const T* gs = gyrow + g.px - kx;
                                    for (int64_t ix = lo; ix < hi; ++ix)
                                        acc[static_cast<size_t>(ix)] += gs[ix] * wv;
                                }
                            }
                        }
                    }
                    T* gxrow = gxs + (iz * g.h + iy) * g.w;
                    for (int64_t ix = 0; ix < g.w; ++ix)
                        gxrow[ix] += acc[static_cast<size_t>(ix)];
                }
        }
    });
}

template <typename T>
void conv3d_backward_weight(const T* x, const T* gy, T* gw, const ConvGeom& g)
{
    const int64_t in_slice = g.in_slice();
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.cout, [&](int64_t begin, int64_t end) {
        for (int64_t co = begin; co < end; ++co) {
            T* gwc = gw + co * g.cin * g.kernel_size();
            for (int64_t ci = 0; ci < g.cin; ++ci)
                for (int64_t kz = 0; kz < g.kd; ++kz)
                    for (int64_t ky = 0; ky < g.kh; ++ky)
                        for (int64_t kx = 0; kx < g.kw; ++kx) {
                            T sum = 0;
                            int64_t lo, hi;
                            tap_range(kx, g.px, g.w, g.ow, lo, hi);
                            for (int64_t ni = 0; ni < g.n; ++ni) {
                                const T* xs = x + (ni * g.cin + ci) * in_slice;
                                const T* gys = gy + (ni * g.cout + co) * out_slice;
                                for (int64_t oz = 0; oz < g.od; ++oz) {
                                    const int64_t iz = oz - g.pz + kz;
                                    if (iz < 0 || iz >= g.d)
                                        continue;
                                    for (int64_t oy = 0; oy < g.oh; ++oy) {
                                        const int64_t iy = oy - g.py + ky;
                                        if (iy < 0 || iy >= g.h)
                                            continue;
                                        const T* xrow =
                                            xs + (iz * g.h + iy) * g.w - g.px + kx;
                                        const T* gyrow = gys + (oz * g.oh + oy) * g.ow;
                                        for (int64_t ox = lo; ox < hi; ++ox)
                                            sum += xrow[ox] * gyrow[ox];
                                    }
                                }
                            }
                            gwc[((ci * g.kd + kz) * g.kh + ky) * g.kw + kx] += sum;
                        }
        }
    });
}

template <typename T>
void conv3d_backward_bias(const T* gy, T* gb, const ConvGeom& g)
{
    const int64_t out_slice = g.out_slice();
    parallel_for(0, g.cout, [&](int64_t begin, int64_t end) {
        for (int64_t co = begin; co < end; ++co) {
            T sum = 0;
            for (int64_t ni = 0; ni < g.n; ++ni) {
                const T* gys = gy + (ni * g.cout + co) * out_slice;
                for (int64_t i = 0; i < out_slice; ++i)
                    sum += gys[i];
            }
            gb[co] += sum;
        }
    });
}

template <typename T>
void maxpool3d_forward(const T* x, T* y, int64_t* argmax, const PoolGeom& g)
{
    const int64_t in_slice = g.d * g.h * g.w;
    const int64_t out_slice = g.od * g.oh * g.ow;
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const T* xs = x + s * in_slice;
            T* ys = y + s * out_slice;
            int64_t* as = argmax + s * out_slice;
            int64_t o = 0;
            for (int64_t oz = 0; oz < g.od; ++oz)
                for (int64_t oy = 0; oy < g.oh; ++oy)
                    for (int64_t ox = 0; ox < g.ow; ++ox, ++o) {
                        const int64_t z0 = oz * g.wz, y0 = oy * g.wy, x0 = ox * g.wx;
                        int64_t best_idx = (z0 * g.h + y0) * g.w + x0;
                        T best = xs[best_idx];
                        for (int64_t dz = 0; dz < g.wz; ++dz)
                            for (int64_t dy = 0; dy < g.wy; ++dy)
                                for (int64_t dx = 0; dx < g.wx; ++dx) {
                                    const int64_t idx =
                                        ((z0 + dz) * g.h + (y0 + dy)) * g.w + x0 + dx;
                                    // strict > keeps the first maximum on ties
                                    if (xs[idx] > best) {
                                        best = xs[idx];
                                        best_idx = idx;
                                    }
                                }
                        ys[o] = best;
                        as[o] = best_idx;
                    }
        }
    });
}

template <typename T>
void maxpool3d_backward(const T* gy, const int64_t* argmax, T* gx, const PoolGeom& g)
{
    const int64_t in_slice = g.d * g.h * g.w;
    const int64_t out_slice = g.od * g.oh * g.ow;
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const T* gys = gy + s * out_slice;
            const int64_t* as = argmax + s * out_slice;
            T* gxs = gx + s * in_slice;
            for (int64_t o = 0; o < out_slice; ++o)
                gxs[as[o]] += gys[o];
        }
    });
}

template <typename T>
void upsample3d_forward(const T* x, T* y, const ResizeGeom& g)
{
    const auto sz = axis_samples(g.d, g.od);
    const auto sy = axis_samples(g.h, g.oh);
    const auto sx = axis_samples(g.w, g.ow);
    const int64_t in_slice = g.d * g.h * g.w;
    const int64_t out_slice = g.od * g.oh * g.ow;
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const T* xs = x + s * in_slice;
            T* ys = y + s * out_slice;
            int64_t o = 0;
            for (int64_t oz = 0; oz < g.od; ++oz) {
                const AxisSample& az = sz[static_cast<size_t>(oz)];
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const AxisSample& ay = sy[static_cast<size_t>(oy)];
                    for (int64_t ox = 0; ox < g.ow; ++ox, ++o) {
                        const AxisSample& ax = sx[static_cast<size_t>(ox)];
                        const double wz1 = az.w1, wy1 = ay.w1, wx1 = ax.w1;
                        const double wz0 = 1.0 - wz1, wy0 = 1.0 - wy1, wx0 = 1.0 - wx1;
                        auto at = [&](int64_t z, int64_t yy, int64_t xx) {
                            return static_cast<double>(xs[(z * g.h + yy) * g.w + xx]);
                        };
                        const double v =
                            wz0 * (wy0 * (wx0 * at(az.i0, ay.i0, ax.i0) +
                                          wx1 * at(az.i0, ay.i0, ax.i1)) +
                                   wy1 * (wx0 * at(az.i0, ay.i1, ax.i0) +
                                          wx1 * at(az.i0, ay.i1, ax.i1))) +
                            wz1 * (wy0 * (wx0 * at(az.i1, ay.i0, ax.i0) +
                                          wx1 * at(az.i1, ay.i0, ax.i1)) +
                                   wy1 * (wx0 * at(az.i1, ay.i1, ax.i0) +
                                          wx1 * at(az.i1, ay.i1, ax.i1)));
                        ys[o] = static_cast<T>(v);
                    }
                }
            }
        }
    });
}

template <typename T>
void upsample3d_backward(const T* gy, T* gx, const ResizeGeom& g)
{
    const auto sz = axis_samples(g.d, g.od);
    const auto sy = axis_samples(g.h, g.oh);
    const auto sx = axis_samples(g.w, g.ow);
    const int64_t in_slice = g.d * g.h * g.w;
    const int64_t out_slice = g.od * g.oh * g.ow;
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const T* gys = gy + s * out_slice;
            T* gxs = gx + s * in_slice;
            int64_t o = 0;
            for (int64_t oz = 0; oz < g.od; ++oz) {
                const AxisSample& az = sz[static_cast<size_t>(oz)];
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const AxisSample& ay = sy[static_cast<size_t>(oy)];
                    for (int64_t ox = 0; ox < g.ow; ++ox, ++o) {
                        const AxisSample& ax = sx[static_cast<size_t>(ox)];
                        const double gv = static_cast<double>(gys[o]);
                        const double wz1 = az.w1, wy1 = ay.w1, wx1 = ax.w1;
                        const double wz0 = 1.0 - wz1, wy0 = 1.0 - wy1, wx0 = 1.0 - wx1;
                        auto put = [&](int64_t z, int64_t yy, int64_t xx, double wgt) {
                            gxs[(z * g.h + yy) * g.w + xx] += static_cast<T>(wgt * gv);
                        };
                        put(az.i0, ay.i0, ax.i0, wz0 * wy0 * wx0);
                        put(az.i0, ay.i0, ax.i1, wz0 * wy0 * wx1);
                        put(az.i0, ay.i1, ax.i0, wz0 * wy1 * wx0);
                        put(az.i0, ay.i1, ax.i1, wz0 * wy1 * wx1);
                        put(az.i1, ay.i0, ax.i0, wz1 * wy0 * wx0);
                        put(az.i1, ay.i0, ax.i1, wz1 * wy0 * wx1);
                        put(az.i1, ay.i1, ax.i0, wz1 * wy1 * wx0);
                        put(az.i1, ay.i1, ax.i1, wz1 * wy1 * wx1);
                    }
                }
            }
        }
    });
}

template <typename T>
void instnorm_forward(const T* x, const T* gamma, const T* beta, T eps, T* y,
                      T* mean, T* invstd, const NormGeom& g)
{
    parallel_for(0, g.n * g.c, [&](int64_t begin, int64_t end) {
        for (int64_t s = begin; s < end; ++s) {
            const int64_t ci = s % g.c;
            const T* xs = x + s * g.m;
            T* ys = y + s * g.m;
            double sum = 0.0;
            for (int64_t i = 0; i < g.m; ++i)
                sum += static_cast<double>(xs[i]);
            const double mu = sum / static_cast<double>(g.m);
            double var = 0.0;
            for (int64_t i = 0; i < g.m; ++i) {
                const double dlt = static_cast<double>(xs[i]) - mu;
                var += dlt * dlt;
            }
            var /= static_cast<double>(g.m);
            const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
            mean[s] = static_cast<T>(mu);
            invstd[s] = static_cast<T>(istd);
            const double a = static_cast<double>(gamma[ci]) * istd;
            const double b = static_cast<double>(beta[ci]) - mu * a;
            for (int64_t i = 0; i < g.m; ++i)
                ys[i] = static_cast<T>(static_cast<double>(xs[i]) * a + b);
        }
    });
}

template <typename T>
void instnorm_backward(const T* x, const T* gamma, const T* mean, const T* invstd,
                       const T* gy, T* gx, T* ggamma, T* gbeta, const NormGeom& g)
{
    // parallel over channels so the gamma/beta accumulations stay disjoint
    parallel_for(0, g.c, [&](int64_t begin, int64_t end) {
        for (int64_t ci = begin; ci < end; ++ci) {
            double gg = 0.0, gb = 0.0;
            for (int64_t ni = 0; ni < g.n; ++ni) {
                const int64_t s = ni * g.c + ci;
                const T* xs = x + s * g.m;
                const T* gys = gy + s * g.m;
                T* gxs = gx + s * g.m;
                const double mu = static_cast<double>(mean[s]);
                const double istd = static_cast<double>(invstd[s]);
                double sum_gy = 0.0, sum_gy_xhat = 0.0;
                for (int64_t i = 0; i < g.m; ++i) {
                    const double xhat = (static_cast<double>(xs[i]) - mu) * istd;
                    const double gv = static_cast<double>(gys[i]);
                    sum_gy += gv;
                    sum_gy_xhat += gv * xhat;
                }
                gg += sum_gy_xhat;
                gb += sum_gy;
                const double m = static_cast<double>(g.m);
                const double k = static_cast<double>(gamma[ci]) * istd;
                const double mean_gy = sum_gy / m;
                const double mean_gy_xhat = sum_gy_xhat / m;
                for (int64_t i = 0; i < g.m; ++i) {
                    const double xhat = (static_cast<double>(xs[i]) - mu) * istd;
                    const double gv = static_cast<double>(gys[i]);
                    gxs[i] += static_cast<T>(k * (gv - mean_gy - xhat * mean_gy_xhat));
                }
            }
            ggamma[ci] += static_cast<T>(gg);
            gbeta[ci] += static_cast<T>(gb);
        }
    });
}

template <typename T>
void leaky_relu_forward(const T* x, T slope, T* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i)
            y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
    });
}

template <typename T>
void leaky_relu_backward(const T* x, const T* gy, T slope, T* gx, int64_t count)
{
    parallel_for(0, count, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i)
            gx[i] += x[i] >= T(0) ? gy[i] : slope * gy[i];
    });
}

template <typename T>
void add(const T* a, const T* b, T* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            y[i] = a[i] + b[i];
    });
}

template <typename T>
void sub(const T* a, const T* b, T* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            y[i] = a[i] - b[i];
    });
}

template <typename T>
void abs_val(const T* x, T* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            y[i] = x[i] < T(0) ? -x[i] : x[i];
    });
}

template <typename T>
void abs_backward(const T* x, const T* gy, T* gx, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            if (x[i] > T(0))
                gx[i] += gy[i];
            else if (x[i] < T(0))
                gx[i] -= gy[i];
        }
    });
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t count)
{
    parallel_for(0, count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            y[i] += alpha * x[i];
    });
}

template <typename T>
T reduce_sum(const T* x, int64_t count)
{
    T sum = 0;
    for (int64_t i = 0; i < count; ++i)
        sum += x[i];
    return sum;
}

template <typename T>
void softmax_channels_forward(const T* x, T* y, int64_t n, int64_t c, int64_t m)
{
    parallel_for(0, n * m, [&](int64_t begin, int64_t end) {
        for (int64_t v = begin; v < end; ++v) {
            const int64_t ni = v / m;
            const int64_t mi = v % m;
            const T* xv = x + ni * c * m + mi;
            T* yv = y + ni * c * m + mi;
            T mx = xv[0];
            for (int64_t ci = 1; ci < c; ++ci)
                mx = std::max(mx, xv[ci * m]);
            double denom = 0.0;
            for (int64_t ci = 0; ci < c; ++ci) {
                const double e = std::exp(static_cast<double>(xv[ci * m] - mx));
                yv[ci * m] = static_cast<T>(e);
                denom += e;
            }
            for (int64_t ci = 0; ci < c; ++ci)
                yv[ci * m] = static_cast<T>(static_cast<double>(yv[ci * m]) / denom);
        }
    });
}

template <typename T>
void softmax_channels_backward(const T* y, const T* gy, T* gx, int64_t n, int64_t c, int64_t m)
{
    parallel_for(0, n * m, [&](int64_t begin, int64_t end) {
        for (int64_t v = begin; v < end; ++v) {
            const int64_t ni = v / m;
            const int64_t mi = v % m;
            const T* yv = y + ni * c * m + mi;
            const T* gv = gy + ni * c * m + mi;
            T* gxv = gx + ni * c * m + mi;
            double dot = 0.0;
            for (int64_t ci = 0; ci < c; ++ci)
                dot += static_cast<double>(gv[ci * m]) * static_cast<double>(yv[ci * m]);
            for (int64_t ci = 0; ci < c; ++ci)
                gxv[ci * m] += static_cast<T>(
                    static_cast<double>(yv[ci * m]) *
                    (static_cast<double>(gv[ci * m]) - dot));
        }
    });
}

#define MNET_INSTANTIATE_SCALAR(T)                                                        \
    template void conv3d_forward<T>(const T*, const T*, const T*, T*, const ConvGeom&);   \
    template void conv3d_backward_input<T>(const T*, const T*, T*, const ConvGeom&);      \
    template void conv3d_backward_weight<T>(const T*, const T*, T*, const ConvGeom&);     \
    template void conv3d_backward_bias<T>(const T*, T*, const ConvGeom&);                 \
    template void maxpool3d_forward<T>(const T*, T*, int64_t*, const PoolGeom&);          \
    template void maxpool3d_backward<T>(const T*, const int64_t*, T*, const PoolGeom&);   \
    template void upsample3d_forward<T>(const T*, T*, const ResizeGeom&);                 \
    template void upsample3d_backward<T>(const T*, T*, const ResizeGeom&);                \
    template void instnorm_forward<T>(const T*, const T*, const T*, T, T*, T*, T*,        \
                                      const NormGeom&);                                   \
    template void instnorm_backward<T>(const T*, const T*, const T*, const T*, const T*,  \
                                       T*, T*, T*, const NormGeom&);                      \
    template void leaky_relu_forward<T>(const T*, T, T*, int64_t);                        \
    template void leaky_relu_backward<T>(const T*, const T*, T, T*, int64_t);             \
    template void add<T>(const T*, const T*, T*, int64_t);                                \
    template void sub<T>(const T*, const T*, T*, int64_t);                                \
    template void abs_val<T>(const T*, T*, int64_t);                                      \
    template void abs_backward<T>(const T*, const T*, T*, int64_t);                       \
    template void axpy<T>(T, const T*, T*, int64_t);                                      \
    template T reduce_sum<T>(const T*, int64_t);                                          \
    template void softmax_channels_forward<T>(const T*, T*, int64_t, int64_t, int64_t);   \
    template void softmax_channels_backward<T>(const T*, const T*, T*, int64_t, int64_t,  \
                                               int64_t);

MNET_INSTANTIATE_SCALAR(float)
MNET_INSTANTIATE_SCALAR(double)

#undef MNET_INSTANTIATE_SCALAR

} // namespace mnet::kernels::scalar
