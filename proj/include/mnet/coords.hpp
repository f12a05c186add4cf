#pragma once

#include <cmath>
#include <cstdint>

// Shared half-pixel-offset coordinate convention for every resampling path
// (trilinear upsampling, nearest-neighbor label resampling, volume
// resampling).

namespace mnet::coords {

// Source coordinate for target index t, clamped to [0, src-1].
inline double half_pixel(int64_t t, int64_t src, int64_t dst)
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

// Nearest source index under the same convention; .5 rounds up.
inline int64_t nearest_index(int64_t t, int64_t src, int64_t dst)
{
    const int64_t i = std::llround(half_pixel(t, src, dst));
    if (i < 0)
        return 0;
    if (i >= src)
        return src - 1;
    return i;
}

} // namespace mnet::coords
