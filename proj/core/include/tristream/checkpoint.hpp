#pragma once

#include <filesystem>

#include "tristream/config.hpp"
#include "tristream/layers.hpp"

namespace tristream {

// Checkpoint layout: <dir>/manifest.json (format version, network config,
// parameter names + shapes) and <dir>/params/<name>.t3sr per tensor.
void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& cfg,
                     const ParamList& params);

NetworkConfig load_checkpoint_config(const std::filesystem::path& dir);

// Loads into an already-constructed model's parameters; names and shapes
// must match the manifest exactly.
void load_checkpoint_params(const std::filesystem::path& dir, ParamList& params);

}  // namespace tristream
