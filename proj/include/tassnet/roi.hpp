#pragma once

#include <array>
#include <filesystem>
#include <set>

#include "tassnet/volume.hpp"

namespace tassnet {

/// Default fine-stage crop (x, y, z).
inline constexpr Index3 kDefaultPatchSize{256, 256, 44};

/// Crop geometry linking patch space to the original grid. Patch index p maps to
/// original index start + p - pad_before along each axis; indices that land outside
/// the original grid are padding.
struct PatchWindow {
  Index3 start{0, 0, 0};
  Index3 size = kDefaultPatchSize;
  Index3 pad_before{0, 0, 0};
  Index3 pad_after{0, 0, 0};
  Index3 original_shape{0, 0, 0};

  bool operator==(const PatchWindow&) const = default;
  void validate() const;
};

struct CenterOfMass {
  std::array<double, 3> position{0.0, 0.0, 0.0};
  std::size_t voxel_count = 0;
  /// No foreground voxel existed; position is the grid center.
  bool fallback = false;
};

CenterOfMass center_of_mass(const LabelMap& l, const std::set<int>& foreground);

/// Window centered at round(com) and clamped inside the grid; axes shorter than `size`
/// are zero-padded symmetrically (extra voxel goes after).
PatchWindow plan_window(const Index3& original_shape, const std::array<double, 3>& com,
                        const Index3& size);

struct Patch {
  Volume volume;
  PatchWindow window;
};

Patch extract_patch(const Volume& v, const std::array<double, 3>& com, const Index3& size);
Volume crop(const Volume& v, const PatchWindow& w);
LabelMap crop(const LabelMap& l, const PatchWindow& w);

/// Places patch content back on the original grid; everything outside the window is
/// background. `original` supplies spacing and affine of the target grid.
LabelMap restore_to_original(const LabelMap& patch, const PatchWindow& w, const Geometry& original);
ProbabilityMap restore_to_original(const ProbabilityMap& patch, const PatchWindow& w,
                                   const Geometry& original);

/// Collapses all fine foreground classes to the coarse atrial-region class.
LabelMap coarse_target(const LabelMap& fine);

/// Sidecar text: one `key = values` line per field.
void write_window_sidecar(const PatchWindow& w, const CenterOfMass& com,
                          const std::filesystem::path& path);
PatchWindow read_window_sidecar(const std::filesystem::path& path);

}  // namespace tassnet
