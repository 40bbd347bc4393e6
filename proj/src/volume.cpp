#include "tassnet/volume.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tassnet {

Affine diagonal_affine(const Spacing& spacing) {
  Affine a{};
  for (int r = 0; r < 3; ++r) a[r][r] = spacing[r];
  return a;
}

Geometry::Geometry(Index3 shape_, Spacing spacing_)
    : shape(shape_), spacing(spacing_), affine(diagonal_affine(spacing_)) {
  validate();
}

Geometry::Geometry(Index3 shape_, Spacing spacing_, Affine affine_)
    : shape(shape_), spacing(spacing_), affine(affine_) {
  validate();
}

bool Geometry::same_grid(const Geometry& other, double spacing_tol) const {
  if (shape != other.shape) return false;
  for (int i = 0; i < 3; ++i)
    if (std::abs(spacing[i] - other.spacing[i]) > spacing_tol) return false;
  return true;
}

void Geometry::validate() const {
  static constexpr const char* axes = "xyz";
  for (int i = 0; i < 3; ++i) {
    if (shape[i] < 1)
      throw std::invalid_argument(std::string("extent along ") + axes[i] + " must be positive");
    if (!(spacing[i] > 0.0) || !std::isfinite(spacing[i]))
      throw std::invalid_argument(std::string("spacing along ") + axes[i] +
                                  " must be strictly positive");
  }
}

ClassScheme::ClassScheme(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
  if (entries_.size() < 2) throw std::invalid_argument("class scheme needs at least two classes");
  std::set<std::string> names;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id != static_cast<int>(i))
      throw std::invalid_argument("class ids must be contiguous from 0");
    if (!names.insert(entries_[i].name).second)
      throw std::invalid_argument("duplicate class name '" + entries_[i].name + "'");
  }
  if (entries_[0].name != "background")
    throw std::invalid_argument("class 0 must be background");
}

ClassScheme ClassScheme::fine() {
  return ClassScheme({{0, "background"},
                      {1, "LA wall"},
                      {2, "RA wall"},
                      {3, "LA cavity"},
                      {4, "RA cavity"}});
}

ClassScheme ClassScheme::coarse() {
  return ClassScheme({{0, "background"}, {1, "atrial region"}});
}

const std::string& ClassScheme::name(int id) const {
  if (!contains(id)) throw std::out_of_range("class id " + std::to_string(id) + " not in scheme");
  return entries_[static_cast<std::size_t>(id)].name;
}

Volume::Volume(Geometry geometry, std::vector<float> data)
    : geometry_(std::move(geometry)), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count())
    throw std::invalid_argument("volume data size does not match its shape");
}

LabelMap::LabelMap(Geometry geometry, std::vector<std::uint8_t> labels, ClassScheme scheme)
    : geometry_(std::move(geometry)), labels_(std::move(labels)), scheme_(std::move(scheme)) {
  geometry_.validate();
  if (labels_.size() != geometry_.voxel_count())
    throw std::invalid_argument("label data size does not match its shape");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!scheme_.contains(labels_[i])) {
      const auto nx = static_cast<std::size_t>(geometry_.shape[0]);
      const auto ny = static_cast<std::size_t>(geometry_.shape[1]);
      std::ostringstream msg;
      msg << "label " << int(labels_[i]) << " at voxel (" << i % nx << ", " << (i / nx) % ny
          << ", " << i / (nx * ny) << ") is outside the class scheme";
      throw std::invalid_argument(msg.str());
    }
  }
}

LabelMap LabelMap::background(const Geometry& geometry, ClassScheme scheme) {
  return LabelMap(geometry, std::vector<std::uint8_t>(geometry.voxel_count(), 0), std::move(scheme));
}

std::size_t LabelMap::count(int class_id) const {
  std::size_t n = 0;
  for (auto l : labels_) n += (l == class_id);
  return n;
}

ProbabilityMap::ProbabilityMap(Geometry geometry, ClassScheme scheme, std::vector<float> probs,
                               double tolerance)
    : geometry_(std::move(geometry)), scheme_(std::move(scheme)), probs_(std::move(probs)) {
  geometry_.validate();
  const std::size_t n = geometry_.voxel_count();
  const auto k = static_cast<std::size_t>(scheme_.size());
  if (probs_.size() != n * k)
    throw std::invalid_argument("probability data size does not match shape and class count");
  for (std::size_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const float p = probs_[c * n + v];
      if (!(p >= 0.0f && p <= 1.0f))
        throw std::invalid_argument("probability outside [0, 1] at voxel " + std::to_string(v));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw std::invalid_argument("probabilities at voxel " + std::to_string(v) +
                                  " do not sum to 1");
  }
}

Volume normalize_intensity(const Volume& v) {
  const auto src = v.data();
  if (src.empty()) throw std::invalid_argument("cannot normalize an empty volume");
  double mean = 0.0;
  for (float x : src) mean += x;
  mean /= static_cast<double>(src.size());
  double var = 0.0;
  for (float x : src) var += (x - mean) * (x - mean);
  var /= static_cast<double>(src.size());
  std::vector<float> out(src.size(), 0.0f);
  if (var > 0.0) {
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < src.size(); ++i)
      out[i] = static_cast<float>((src[i] - mean) * inv_std);
  }
  return Volume(v.geometry(), std::move(out));
}

ProbabilityMap one_hot(const LabelMap& l) {
  const std::size_t n = l.geometry().voxel_count();
  const int k = l.scheme().size();
  std::vector<float> probs(n * static_cast<std::size_t>(k), 0.0f);
  const auto labels = l.labels();
  for (std::size_t v = 0; v < n; ++v) {
    if (labels[v] >= k)
      throw std::invalid_argument("label " + std::to_string(labels[v]) + " at voxel " +
                                  std::to_string(v) + " is outside the class scheme");
    probs[static_cast<std::size_t>(labels[v]) * n + v] = 1.0f;
  }
  return ProbabilityMap(l.geometry(), l.scheme(), std::move(probs));
}

LabelMap argmax(const ProbabilityMap& p) {
  const std::size_t n = p.geometry().voxel_count();
  const int k = p.num_classes();
  const auto probs = p.probs();
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    float best = probs[v];
    int best_k = 0;
    for (int c = 1; c < k; ++c) {
      const float q = probs[static_cast<std::size_t>(c) * n + v];
      if (q > best) {
        best = q;
        best_k = c;
      }
    }
    labels[v] = static_cast<std::uint8_t>(best_k);
  }
  return LabelMap(p.geometry(), std::move(labels), p.scheme());
}

}  // namespace tassnet
