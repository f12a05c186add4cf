#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "mnet/rng.hpp"
#include "mnet/volume.hpp"

namespace mnet {

// One training patch: image (C, pz, py, px) and labels (pz, py, px),
// zero/background padded where the patch exceeds the volume.
struct PatchPair {
    int64_t c = 1;
    std::array<int64_t, 3> size{1, 1, 1};
    std::vector<float> image;
    std::vector<int32_t> labels;
};

// With probability fg_oversample_prob the patch centers on a uniformly
// chosen foreground voxel (clamped so the patch stays inside the volume
// where possible), otherwise on a uniform voxel.
PatchPair sample_patch(const Volume& vol, const LabelVolume& labels,
                       std::array<int64_t, 3> patch_size, double fg_oversample_prob,
                       Rng& rng);

// Deterministic shuffled 80/20 (by default) split; both sides non-empty.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& case_ids, uint64_t seed, double train_fraction = 0.8);

} // namespace mnet
