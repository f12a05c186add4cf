#include "mnet/resample.hpp"

#include <cmath>

#include "mnet/coords.hpp"
#include "mnet/kernels.hpp"

namespace mnet {

namespace {

int64_t target_extent(int64_t extent, double src_spacing, double target_spacing)
{
    const int64_t e = std::llround(static_cast<double>(extent) * src_spacing /
                                   target_spacing);
    return std::max<int64_t>(1, e);
}

template <typename V>
void nearest_resize(const V* src, V* dst, std::array<int64_t, 3> in,
                    std::array<int64_t, 3> out)
{
    std::vector<int64_t> iz(static_cast<size_t>(out[0]));
    std::vector<int64_t> iy(static_cast<size_t>(out[1]));
    std::vector<int64_t> ix(static_cast<size_t>(out[2]));
    for (int64_t t = 0; t < out[0]; ++t)
        iz[static_cast<size_t>(t)] = coords::nearest_index(t, in[0], out[0]);
    for (int64_t t = 0; t < out[1]; ++t)
        iy[static_cast<size_t>(t)] = coords::nearest_index(t, in[1], out[1]);
    for (int64_t t = 0; t < out[2]; ++t)
        ix[static_cast<size_t>(t)] = coords::nearest_index(t, in[2], out[2]);

    size_t o = 0;
    for (int64_t z = 0; z < out[0]; ++z)
        for (int64_t y = 0; y < out[1]; ++y)
            for (int64_t x = 0; x < out[2]; ++x, ++o)
                dst[o] = src[(iz[static_cast<size_t>(z)] * in[1] +
                              iy[static_cast<size_t>(y)]) *
                                 in[2] +
                             ix[static_cast<size_t>(x)]];
}

} // namespace

Volume resample_volume(const Volume& vol, std::array<double, 3> target_spacing_mm,
                       ResampleMode mode)
{
    vol.validate();
    for (double s : target_spacing_mm)
        check(s > 0.0, ErrorKind::Config, "target spacing must be positive");

    Volume out;
    out.c = vol.c;
    out.d = target_extent(vol.d, vol.spacing_mm[0], target_spacing_mm[0]);
    out.h = target_extent(vol.h, vol.spacing_mm[1], target_spacing_mm[1]);
    out.w = target_extent(vol.w, vol.spacing_mm[2], target_spacing_mm[2]);
    out.spacing_mm = target_spacing_mm;
    out.voxels.resize(static_cast<size_t>(out.c * out.d * out.h * out.w));

    if (mode == ResampleMode::Trilinear) {
        kernels::ResizeGeom g;
        g.n = 1;
        g.c = vol.c;
        g.d = vol.d;
        g.h = vol.h;
        g.w = vol.w;
        g.od = out.d;
        g.oh = out.h;
        g.ow = out.w;
        kernels::upsample3d_forward(vol.voxels.data(), out.voxels.data(), g);
    } else {
        const int64_t in_slice = vol.spatial_numel();
        const int64_t out_slice = out.spatial_numel();
        for (int64_t c = 0; c < vol.c; ++c)
            nearest_resize(vol.voxels.data() + c * in_slice,
                           out.voxels.data() + c * out_slice, {vol.d, vol.h, vol.w},
                           {out.d, out.h, out.w});
    }
    return out;
}

LabelVolume resample_volume(const LabelVolume& vol,
                            std::array<double, 3> target_spacing_mm)
{
    vol.validate();
    for (double s : target_spacing_mm)
        check(s > 0.0, ErrorKind::Config, "target spacing must be positive");

    LabelVolume out;
    out.d = target_extent(vol.d, vol.spacing_mm[0], target_spacing_mm[0]);
    out.h = target_extent(vol.h, vol.spacing_mm[1], target_spacing_mm[1]);
    out.w = target_extent(vol.w, vol.spacing_mm[2], target_spacing_mm[2]);
    out.spacing_mm = target_spacing_mm;
    out.labels.resize(static_cast<size_t>(out.numel()));
    nearest_resize(vol.labels.data(), out.labels.data(), {vol.d, vol.h, vol.w},
                   {out.d, out.h, out.w});
    return out;
}

LabelVolume downsample_label(const LabelVolume& vol, std::array<int64_t, 3> target_shape)
{
    vol.validate();
    for (int64_t e : target_shape)
        check(e >= 1, ErrorKind::Shape, "label target extents must be >= 1");

    LabelVolume out;
    out.d = target_shape[0];
    out.h = target_shape[1];
    out.w = target_shape[2];
    out.spacing_mm = {vol.spacing_mm[0] * double(vol.d) / double(out.d),
                      vol.spacing_mm[1] * double(vol.h) / double(out.h),
                      vol.spacing_mm[2] * double(vol.w) / double(out.w)};
    out.labels.resize(static_cast<size_t>(out.numel()));
    nearest_resize(vol.labels.data(), out.labels.data(), {vol.d, vol.h, vol.w},
                   {out.d, out.h, out.w});
    return out;
}

} // namespace mnet
