#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mnet/runconfig.hpp"
#include "mnet/train.hpp"

namespace mnet {

// One trained-and-evaluated point of the inter-slice spacing sweep.
struct AnisotropyPoint {
    std::string arch;
    double z_spacing_mm = 0.0;
    double y_spacing_mm = 0.0;
    double x_spacing_mm = 0.0;
    std::vector<double> dice_per_class; // classes 0..C-1 on the test split
    double mean_fg_dice = 0.0;          // mean over classes 1..C-1
};

struct AnisotropyResult {
    std::vector<AnisotropyPoint> points; // grouped by arch, spacing ascending
};

// Generates one phantom dataset at the configured (1mm inter-slice)
// spacing, then for every target z spacing resamples it, trains each
// configured architecture from scratch and evaluates mean foreground Dice
// on the held-out split.
AnisotropyResult run_anisotropy_experiment(const RunConfig& cfg,
                                           const std::filesystem::path& out_dir);

void write_anisotropy_csv(const AnisotropyResult& result,
                          const std::filesystem::path& path);
// One polyline per architecture, spacing on x, mean foreground Dice on y.
void write_anisotropy_svg(const AnisotropyResult& result,
                          const std::filesystem::path& path);

} // namespace mnet
