#pragma once

// Parameter checkpoints: all parameter tensors concatenated in network order
// as little-endian float32 at `path`, and a manifest at "<path>.json":
//   {"format": "tomoforge-params", "seed": .., "spec": {..},
//    "tensors": [{"name": .., "shape": [..], "offset": ..}, ..]}
// where offset counts floats from the start of the data file.

#include <filesystem>

#include <json.hpp>

#include "tomoforge/nn/network.hpp"

namespace tomoforge::nn {

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Builds a network from the manifest and loads its parameters. Throws
/// tomoforge::FormatError on layout or size mismatch.
Network<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace tomoforge::nn
