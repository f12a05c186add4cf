#include "mnet/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace mnet {

PatchPair sample_patch(const Volume& vol, const LabelVolume& labels,
                       std::array<int64_t, 3> patch_size, double fg_oversample_prob,
                       Rng& rng)
{
    vol.validate();
    labels.validate();
    check(vol.d == labels.d && vol.h == labels.h && vol.w == labels.w, ErrorKind::Shape,
          "image and label grids differ");
    for (int64_t e : patch_size)
        check(e >= 1, ErrorKind::Shape, "patch extents must be >= 1");

    const std::array<int64_t, 3> ext{vol.d, vol.h, vol.w};

    std::array<int64_t, 3> center{};
    bool want_fg = std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
                   fg_oversample_prob;
    if (want_fg) {
        std::vector<int64_t> fg;
        for (int64_t i = 0; i < labels.numel(); ++i)
            if (labels.labels[static_cast<size_t>(i)] != 0)
                fg.push_back(i);
        if (fg.empty()) {
            want_fg = false;
        } else {
            const int64_t pick = std::uniform_int_distribution<int64_t>(
                0, static_cast<int64_t>(fg.size()) - 1)(rng);
            const int64_t flat = fg[static_cast<size_t>(pick)];
            center = {flat / (vol.h * vol.w), (flat / vol.w) % vol.h, flat % vol.w};
        }
    }
    if (!want_fg)
        for (int axis = 0; axis < 3; ++axis)
            center[axis] =
                std::uniform_int_distribution<int64_t>(0, ext[axis] - 1)(rng);

    std::array<int64_t, 3> start{};
    for (int axis = 0; axis < 3; ++axis) {
        if (ext[axis] >= patch_size[axis])
            start[axis] = std::clamp<int64_t>(center[axis] - patch_size[axis] / 2, 0,
                                              ext[axis] - patch_size[axis]);
        else
            start[axis] = -(patch_size[axis] - ext[axis]) / 2; // centered padding
    }

    PatchPair out;
    out.c = vol.c;
    out.size = patch_size;
    out.image.assign(
        static_cast<size_t>(vol.c * patch_size[0] * patch_size[1] * patch_size[2]), 0.0f);
    out.labels.assign(static_cast<size_t>(patch_size[0] * patch_size[1] * patch_size[2]),
                      0);

    const int64_t spatial = vol.spatial_numel();
    for (int64_t pz = 0; pz < patch_size[0]; ++pz) {
        const int64_t iz = start[0] + pz;
        if (iz < 0 || iz >= vol.d)
            continue;
        for (int64_t py = 0; py < patch_size[1]; ++py) {
            const int64_t iy = start[1] + py;
            if (iy < 0 || iy >= vol.h)
                continue;
            const int64_t x0 = std::max<int64_t>(0, -start[2]);
            const int64_t x1 = std::min<int64_t>(patch_size[2], vol.w - start[2]);
            for (int64_t px = x0; px < x1; ++px) {
                const int64_t ix = start[2] + px;
                const int64_t src = (iz * vol.h + iy) * vol.w + ix;
                const int64_t dst = (pz * patch_size[1] + py) * patch_size[2] + px;
                out.labels[static_cast<size_t>(dst)] =
                    labels.labels[static_cast<size_t>(src)];
                for (int64_t c = 0; c < vol.c; ++c)
                    out.image[static_cast<size_t>(
                        c * patch_size[0] * patch_size[1] * patch_size[2] + dst)] =
                        vol.voxels[static_cast<size_t>(c * spatial + src)];
            }
        }
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& case_ids, uint64_t seed, double train_fraction)
{
    check(case_ids.size() >= 2, ErrorKind::Config,
          "need at least 2 cases to split, got ", case_ids.size());
    check(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Config,
          "train_fraction must be in (0,1)");

    std::vector<std::string> shuffled = case_ids;
    Rng rng = make_rng(seed, 0);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const int64_t n = static_cast<int64_t>(shuffled.size());
    const int64_t n_train = std::clamp<int64_t>(
        std::llround(train_fraction * static_cast<double>(n)), 1, n - 1);
    std::vector<std::string> train(shuffled.begin(), shuffled.begin() + n_train);
    std::vector<std::string> test(shuffled.begin() + n_train, shuffled.end());
    return {std::move(train), std::move(test)};
}

} // namespace mnet
