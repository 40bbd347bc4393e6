#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tassnet {

/// Voxel extents or indices ordered (x, y, z); x varies fastest in memory.
using Index3 = std::array<std::int64_t, 3>;
using Spacing = std::array<double, 3>;
/// Rows of a voxel-to-world transform; the implicit fourth row is (0, 0, 0, 1).
using Affine = std::array<std::array<double, 4>, 3>;

Affine diagonal_affine(const Spacing& spacing);

/// Shared grid description of every voxel container.
struct Geometry {
  Index3 shape{1, 1, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = diagonal_affine({1.0, 1.0, 1.0});

  Geometry() = default;
  Geometry(Index3 shape, Spacing spacing);
  Geometry(Index3 shape, Spacing spacing, Affine affine);

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
  }
  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + shape[0] * (y + shape[1] * z));
  }
  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < shape[0] && y < shape[1] && z < shape[2];
  }
  bool same_grid(const Geometry& other, double spacing_tol = 1e-6) const;
  /// Throws std::invalid_argument on non-positive extents or spacing.
  void validate() const;
};

struct ClassEntry {
  int id = 0;
  std::string name;
  bool operator==(const ClassEntry&) const = default;
};

/// Ordered label vocabulary; ids are contiguous from 0 and 0 is background.
class ClassScheme {
 public:
  explicit ClassScheme(std::vector<ClassEntry> entries);

  /// background, LA wall, RA wall, LA cavity, RA cavity
  static ClassScheme fine();
  /// background, atrial region
  static ClassScheme coarse();

  int size() const { return static_cast<int>(entries_.size()); }
  bool contains(int id) const { return id >= 0 && id < size(); }
  const std::string& name(int id) const;
  const std::vector<ClassEntry>& entries() const { return entries_; }
  bool operator==(const ClassScheme&) const = default;

 private:
  std::vector<ClassEntry> entries_;
};

namespace fine_class {
inline constexpr int background = 0;
inline constexpr int la_wall = 1;
inline constexpr int ra_wall = 2;
inline constexpr int la_cavity = 3;
inline constexpr int ra_cavity = 4;
}  // namespace fine_class

class Volume {
 public:
  Volume() = default;
  Volume(Geometry geometry, std::vector<float> data);

  const Geometry& geometry() const { return geometry_; }
  const Index3& shape() const { return geometry_.shape; }
  const Spacing& spacing() const { return geometry_.spacing; }
  std::span<const float> data() const { return data_; }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[geometry_.index(x, y, z)];
  }
  std::vector<float> release() && { return std::move(data_); }

 private:
  Geometry geometry_;
  std::vector<float> data_;
};

class LabelMap {
 public:
  LabelMap() : scheme_(ClassScheme::fine()) {}
  /// Throws if any label is outside the scheme.
  LabelMap(Geometry geometry, std::vector<std::uint8_t> labels, ClassScheme scheme);

  static LabelMap background(const Geometry& geometry, ClassScheme scheme);

  const Geometry& geometry() const { return geometry_; }
  const Index3& shape() const { return geometry_.shape; }
  const Spacing& spacing() const { return geometry_.spacing; }
  const ClassScheme& scheme() const { return scheme_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return labels_[geometry_.index(x, y, z)];
  }
  std::size_t count(int class_id) const;

 private:
  Geometry geometry_;
  std::vector<std::uint8_t> labels_;
  ClassScheme scheme_;
};

/// Channel-major soft prediction: probs[k * N + voxel].
class ProbabilityMap {
 public:
  ProbabilityMap() : scheme_(ClassScheme::fine()) {}
  /// Validates range and per-voxel normalization (within `tolerance`).
  ProbabilityMap(Geometry geometry, ClassScheme scheme, std::vector<float> probs,
                 double tolerance = 1e-5);

  const Geometry& geometry() const { return geometry_; }
  const Index3& shape() const { return geometry_.shape; }
  const ClassScheme& scheme() const { return scheme_; }
  int num_classes() const { return scheme_.size(); }
  std::span<const float> probs() const { return probs_; }
  std::span<const float> channel(int k) const {
    const std::size_t n = geometry_.voxel_count();
    return std::span<const float>(probs_).subspan(static_cast<std::size_t>(k) * n, n);
  }

 private:
  Geometry geometry_;
  ClassScheme scheme_;
  std::vector<float> probs_;
};

/// Z-score over all voxels with double-precision statistics; constant input maps to zeros.
Volume normalize_intensity(const Volume& v);

ProbabilityMap one_hot(const LabelMap& l);

/// Per-voxel argmax; ties resolve to the lowest class id.
LabelMap argmax(const ProbabilityMap& p);

}  // namespace tassnet
