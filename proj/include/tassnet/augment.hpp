#pragma once

#include <array>
#include <random>
#include <utility>

#include "tassnet/volume.hpp"

namespace tassnet {

/// Online augmentation ranges and per-sample application probabilities.
struct AugmentationConfig {
  bool rotation = true;
  double rotation_max_deg = 30.0;  // in-plane, about the z axis
  double rotation_prob = 0.2;

  bool scaling = true;
  double scale_min = 0.7;
  double scale_max = 1.4;
  double scaling_prob = 0.2;

  bool noise = true;
  double noise_max_sigma = 0.1;  // fraction of the image standard deviation
  double noise_prob = 0.1;

  bool contrast = true;
  double contrast_min = 0.75;
  double contrast_max = 1.25;
  double contrast_prob = 0.15;

  bool gamma = true;
  double gamma_min = 0.7;
  double gamma_max = 1.5;
  double gamma_prob = 0.3;

  bool inversion = true;
  double inversion_prob = 0.1;

  bool mirroring = true;
  std::array<double, 3> mirror_prob{0.5, 0.5, 0.5};

  static AugmentationConfig disabled();
  void validate() const;
  bool operator==(const AugmentationConfig&) const = default;
};

/// Output voxel p samples the source at c + A^-1 (p - c) (physical units about the grid
/// center c), after undoing the axis flips.
struct SpatialTransform {
  double angle_rad = 0.0;
  double scale = 1.0;
  std::array<bool, 3> flip{false, false, false};

  bool is_identity() const {
    return angle_rad == 0.0 && scale == 1.0 && !flip[0] && !flip[1] && !flip[2];
  }
};

SpatialTransform sample_spatial_transform(const AugmentationConfig& cfg, std::mt19937_64& rng);

/// Trilinear resampling with edge replication.
Volume warp_linear(const Volume& v, const SpatialTransform& t);
/// Nearest-neighbour resampling; samples outside the grid become background.
LabelMap warp_nearest(const LabelMap& l, const SpatialTransform& t);

/// Noise, contrast, gamma and inversion; image only.
Volume apply_intensity_augmentations(const AugmentationConfig& cfg, const Volume& v,
                                     std::mt19937_64& rng);

/// Spatial transforms shared by image and labels, then intensity transforms on the image.
std::pair<Volume, LabelMap> apply_augmentations(const AugmentationConfig& cfg, const Volume& v,
                                                const LabelMap& l, std::mt19937_64& rng);

}  // namespace tassnet
