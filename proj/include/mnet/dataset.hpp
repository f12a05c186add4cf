#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mnet/phantom.hpp"
#include "mnet/train.hpp"

namespace mnet {

// Writes `count` seeded phantom cases (case seed = spec.seed + index) plus
// manifest.json into dir. Returns the case ids in manifest order.
std::vector<std::string> write_phantom_dataset(const std::filesystem::path& dir,
                                               const PhantomSpec& spec, int count);

std::vector<std::string> read_manifest_ids(const std::filesystem::path& dir);

Case load_case(const std::filesystem::path& dir, const std::string& id);
Dataset load_dataset(const std::filesystem::path& dir,
                     const std::vector<std::string>& ids);

} // namespace mnet
