#pragma once

#include <array>

#include "mnet/model.hpp"
#include "mnet/volume.hpp"

namespace mnet {

// Full-volume prediction by sliding a patch-sized window over the volume
// (end-aligned last tile), averaging overlapping tiles in softmax space,
// then taking the per-voxel argmax. overlap is the tile overlap fraction in
// [0, 1).
template <typename T>
LabelVolume sliding_window_predict(Model<T>& model, const Volume& vol,
                                   std::array<int64_t, 3> patch, double overlap);

} // namespace mnet
