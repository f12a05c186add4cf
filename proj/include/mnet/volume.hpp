#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mnet/common.hpp"

namespace mnet {

// Multi-channel voxel grid with physical spacing. Memory order (C,D,H,W),
// x fastest.
struct Volume {
    int64_t c = 1, d = 1, h = 1, w = 1;
    std::vector<float> voxels;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0}; // (z, y, x)

    int64_t spatial_numel() const { return d * h * w; }
    void validate() const;
};

// Integer class labels on the same grid, one value per voxel.
struct LabelVolume {
    int64_t d = 1, h = 1, w = 1;
    std::vector<uint8_t> labels;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    int64_t numel() const { return d * h * w; }
    void validate() const;
};

// File pair <base>.json + <base>.raw. The sidecar records format_version,
// kind ("image"|"label"), shape, spacing_mm, dtype ("f32le"|"u8") and
// byte_length; the payload is little-endian, x fastest.
void save_volume(const std::filesystem::path& base, const Volume& vol);
void save_volume(const std::filesystem::path& base, const LabelVolume& vol);
Volume load_image_volume(const std::filesystem::path& base);
LabelVolume load_label_volume(const std::filesystem::path& base);

} // namespace mnet
