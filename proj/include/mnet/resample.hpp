#pragma once

#include <array>

#include "mnet/volume.hpp"

namespace mnet {

enum class ResampleMode { Trilinear, Nearest };

// Resamples to a new physical spacing. The output extent per axis is
// max(1, round(extent * src_spacing / target_spacing)).
Volume resample_volume(const Volume& vol, std::array<double, 3> target_spacing_mm,
                       ResampleMode mode = ResampleMode::Trilinear);

// Labels always resample nearest-neighbor, so no new label values appear.
LabelVolume resample_volume(const LabelVolume& vol,
                            std::array<double, 3> target_spacing_mm);

// Nearest-neighbor label resize to an explicit grid (deep-supervision
// targets). Spacing scales by the extent ratio.
LabelVolume downsample_label(const LabelVolume& vol, std::array<int64_t, 3> target_shape);

} // namespace mnet
