#pragma once

#include <filesystem>

#include "json.hpp"
#include "tassnet/network.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing model file: magic, format version, a JSON header holding the network
/// configuration, class scheme, parameter names/shapes and free-form metadata, then the raw
/// little-endian float32 parameter values in header order.
struct Checkpoint {
  Network network;
  ClassScheme scheme;
  nlohmann::json meta;
};

void save_checkpoint(const Network& net, const ClassScheme& scheme,
                     const std::filesystem::path& path, const nlohmann::json& meta = {});
/// Throws std::runtime_error on a missing or corrupt file, an unknown version, or a
/// header that disagrees with the network built from its own configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tassnet
