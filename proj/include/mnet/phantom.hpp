#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "mnet/volume.hpp"

namespace mnet {

// Procedural organ-plus-tumors phantom. Geometry is sampled in millimeters
// and only then rasterized through the voxel spacing, so one seed depicts
// the same physical object at any commensurate spacing/shape combination.
// Classes: 0 background, 1 organ (axis-aligned ellipsoid), 2 tumors
// (spheres clipped to the organ).
struct PhantomSpec {
    std::array<int64_t, 3> shape{32, 64, 64};     // (D, H, W)
    std::array<double, 3> spacing_mm{5.0, 1.0, 1.0}; // (z, y, x)
    std::array<double, 2> organ_radius_mm{18.0, 26.0};
    std::array<int, 2> tumor_count{1, 3};
    std::array<double, 2> tumor_radius_mm{4.0, 9.0};

    struct ClassIntensity {
        double mean = 0.0;
        double stddev = 0.0;
    };
    ClassIntensity background{0.05, 0.02};
    ClassIntensity organ{0.5, 0.05};
    ClassIntensity tumor{0.9, 0.05};
    double noise_std = 0.03;
    uint64_t seed = 7;

    void validate() const;
};

std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec);

} // namespace mnet
