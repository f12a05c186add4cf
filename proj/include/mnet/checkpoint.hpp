#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "mnet/model.hpp"

namespace mnet {

// Checkpoint file layout: one line of JSON (format version, arch id, model
// config, run config echo, parameter manifest with names/shapes/byte
// offsets), then every parameter as little-endian 32-bit floats in build
// order.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const nlohmann::json& run_config);

nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Rebuilds the model from the header and loads the payload into it.
template <typename T>
std::unique_ptr<Model<T>> load_checkpoint_model(const std::filesystem::path& path);

} // namespace mnet
