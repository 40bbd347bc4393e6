#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tassnet/volume.hpp"

namespace tassnet {

/// Exact squared Euclidean distance (in physical units) from every voxel center to the
/// nearest voxel with `feature[i] != 0`. Separable lower-envelope algorithm, one pass per
/// axis. Returns +inf everywhere when there is no feature voxel.
std::vector<double> squared_distance_transform(std::span<const std::uint8_t> feature,
                                               const Index3& shape, const Spacing& spacing);

/// Same result computed on one thread; kept as the reference for tests and benchmarks.
std::vector<double> squared_distance_transform_serial(std::span<const std::uint8_t> feature,
                                                      const Index3& shape, const Spacing& spacing);

}  // namespace tassnet
