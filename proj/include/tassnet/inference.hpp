#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "tassnet/checkpoint.hpp"
#include "tassnet/network.hpp"
#include "tassnet/roi.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

/// Volumetric prediction; the ROI must have exactly the network's planned input shape.
ProbabilityMap predict_3d(Network& net, const Volume& roi, const ClassScheme& scheme);

/// Every axial slice goes through the 2D network on its own; outputs are stacked along z.
/// The in-plane extent must equal the network's planned input shape.
ProbabilityMap predict_2d(Network& net, const Volume& roi, const ClassScheme& scheme,
                          int slices_per_batch = 8);

/// Voxel-wise weighted average. Weights default to uniform, must be non-negative and sum
/// to 1 (within 1e-9). Accumulates in double and divides by the weight total, so averaging
/// identical maps returns them unchanged.
ProbabilityMap ensemble(const std::vector<ProbabilityMap>& maps,
                        const std::vector<double>& weights = {});

/// Smallest in-plane factor f with ceil(X/f) ceil(Y/f) Z <= budget; 1 when budget is 0.
int coarse_downsample_factor(const Index3& shape, std::size_t voxel_budget);
/// In-plane block average by `f` (partial edge blocks average what they contain).
Volume downsample_xy(const Volume& v, int f);
/// In-plane block reduction keeping the largest label of each block.
LabelMap downsample_xy(const LabelMap& l, int f);

/// One or more checkpoints per role; several checkpoints of one role (fold ensemble) are
/// averaged before the 2D/3D ensemble.
struct PipelineModels {
  std::vector<Checkpoint> coarse;
  std::vector<Checkpoint> fine_2d;
  std::vector<Checkpoint> fine_3d;

  /// Throws std::invalid_argument naming the role that is missing or inconsistent.
  void validate() const;
  Index3 patch_size() const;
};

struct PipelineOptions {
  /// Voxel budget for the coarse stage; larger volumes are block-averaged in-plane by the
  /// smallest integer factor that fits. 0 disables the limit.
  std::size_t coarse_voxel_budget = 0;
  /// Weights of the 2D and 3D probability maps.
  double weight_2d = 0.5;
  double weight_3d = 0.5;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  LabelMap labels;
  ProbabilityMap probabilities;
  PatchWindow window;
  CenterOfMass center;
  int coarse_downsample = 1;
  std::vector<StageTiming> timings;
  double total_seconds() const;
};

/// normalize, coarse prediction, center of mass, crop, 2D and 3D prediction, ensemble,
/// argmax, restoration. Failures are rethrown as std::runtime_error prefixed with the stage.
PipelineResult full_pipeline(PipelineModels& models, const Volume& v,
                             const PipelineOptions& opts = {});

/// Loads one checkpoint per path, tagging load failures with the role name.
std::vector<Checkpoint> load_role(const std::string& role,
                                  const std::vector<std::filesystem::path>& paths);

}  // namespace tassnet
