#pragma once

#include <cstdint>
#include <span>

#include "mnet/volume.hpp"

namespace mnet {

// 2|P n G| / (|P| + |G|); both masks empty -> 1.
double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> gt, int cls);
double dice_score(const LabelVolume& pred, const LabelVolume& gt, int cls);

} // namespace mnet
