#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "tassnet/folds.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

/// Ellipsoidal atrium; positions and lengths in mm from the grid origin (voxel 0 center).
struct AtriumSpec {
  std::array<double, 3> center{0.0, 0.0, 0.0};
  std::array<double, 3> semi_axes{10.0, 10.0, 10.0};
  double wall = 2.5;

  bool operator==(const AtriumSpec&) const = default;
};

struct PhantomSpec {
  Index3 shape{96, 96, 24};
  Spacing spacing{1.25, 1.25, 2.5};
  AtriumSpec la{{76.0, 60.0, 30.0}, {18.0, 20.0, 14.0}, 2.5};
  AtriumSpec ra{{38.0, 62.0, 30.0}, {16.0, 18.0, 13.0}, 2.5};
  double background_intensity = 0.0;
  double cavity_intensity = 0.5;
  double wall_intensity = 1.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a bad grid, a wall thinner than one voxel along any
  /// axis, or a wall at least as thick as a semi-axis.
  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

/// Cavity = inside the ellipsoid shrunk by the wall thickness; wall = the rest of the
/// ellipsoid. Wall voxels with no background or cavity 6-neighbour are given to the cavity so
/// the wall stays a shell. Throws std::invalid_argument when the two outer ellipsoids share
/// a voxel.
std::pair<Volume, LabelMap> generate_phantom(const PhantomSpec& spec);

/// Per-patient variant of `base`: centers jittered by up to `jitter_mm`, semi-axes scaled
/// by up to +/-`scale_jitter`, retried until the shells are separated.
PhantomSpec vary_phantom(const PhantomSpec& base, std::uint64_t seed, double jitter_mm = 3.0,
                         double scale_jitter = 0.1);

/// Writes images/<scan>.nii.gz, labels/<scan>.nii.gz and patients.json (patient id to scan
/// ids). Returns the patient-to-scan mapping.
PatientScans write_phantom_dataset(const std::filesystem::path& dir, int patients,
                                   int scans_per_patient, const PhantomSpec& base,
                                   std::uint64_t seed);

PatientScans read_patients(const std::filesystem::path& dataset_dir);

}  // namespace tassnet
