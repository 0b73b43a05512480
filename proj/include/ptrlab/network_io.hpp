#pragma once

#include "ptrlab/network.hpp"

#include <filesystem>
#include <json.hpp>

namespace ptrlab {

nlohmann::json network_spec_to_json(const NetworkSpec& spec);

/// Throws ConfigError naming the first offending key, prefixed with `path`.
NetworkSpec network_spec_from_json(const nlohmann::json& j, const std::string& path = "network");

// Checkpoint layout, all integers uint64 and all values IEEE-754 doubles,
// little-endian:
//   layer_count
//   per layer: tensor_count (0 or 2), then per tensor: rank, dims[rank]
//   payload: every tensor's values in row-major order, in header order
// Velocities are not stored.
void save_checkpoint(const std::filesystem::path& file, const NetworkState& state);
NetworkState load_checkpoint(const std::filesystem::path& file, const Network& net);

} // namespace ptrlab
