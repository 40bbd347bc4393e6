#include "tassnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tassnet {

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.rotation = c.scaling = c.noise = c.contrast = c.gamma = c.inversion = c.mirroring = false;
  return c;
}

void AugmentationConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(rotation_prob) || !prob(scaling_prob) || !prob(noise_prob) || !prob(contrast_prob) ||
      !prob(gamma_prob) || !prob(inversion_prob) || !prob(mirror_prob[0]) ||
      !prob(mirror_prob[1]) || !prob(mirror_prob[2]))
    throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  if (rotation_max_deg < 0.0 || noise_max_sigma < 0.0)
    throw std::invalid_argument("augmentation magnitudes must be non-negative");
  if (!(scale_min > 0.0 && scale_min <= scale_max) || !(contrast_min > 0.0 && contrast_min <= contrast_max) ||
      !(gamma_min > 0.0 && gamma_min <= gamma_max))
    throw std::invalid_argument("augmentation ranges must be positive and ordered");
}

SpatialTransform sample_spatial_transform(const AugmentationConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SpatialTransform t;
  if (cfg.rotation && unit(rng) < cfg.rotation_prob) {
    const double max_rad = cfg.rotation_max_deg * std::numbers::pi / 180.0;
    t.angle_rad = std::uniform_real_distribution<double>(-max_rad, max_rad)(rng);
  }
  if (cfg.scaling && unit(rng) < cfg.scaling_prob)
    t.scale = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
  if (cfg.mirroring)
    for (int a = 0; a < 3; ++a) t.flip[a] = unit(rng) < cfg.mirror_prob[a];
  return t;
}

namespace {

// Maps an output voxel to its continuous source coordinate.
struct SourceMap {
  Index3 shape;
  Spacing spacing;
  SpatialTransform t;
  double cos_a, sin_a;
  std::array<double, 3> center;

  SourceMap(const Geometry& g, const SpatialTransform& tr)
      : shape(g.shape), spacing(g.spacing), t(tr), cos_a(std::cos(tr.angle_rad)),
        sin_a(std::sin(tr.angle_rad)) {
    for (int a = 0; a < 3; ++a) center[a] = (static_cast<double>(shape[a]) - 1.0) / 2.0;
  }

  std::array<double, 3> operator()(std::int64_t x, std::int64_t y, std::int64_t z) const {
    std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
    for (int a = 0; a < 3; ++a)
      if (t.flip[a]) p[a] = static_cast<double>(shape[a] - 1) - p[a];
    std::array<double, 3> d;
    for (int a = 0; a < 3; ++a) d[a] = (p[a] - center[a]) * spacing[a];
    // inverse rotation then inverse scaling
    const double rx = cos_a * d[0] + sin_a * d[1];
    const double ry = -sin_a * d[0] + cos_a * d[1];
    const double inv_s = 1.0 / t.scale;
    return {rx * inv_s / spacing[0] + center[0], ry * inv_s / spacing[1] + center[1],
            d[2] * inv_s / spacing[2] + center[2]};
  }
};

}  // namespace

Volume warp_linear(const Volume& v, const SpatialTransform& t) {
  if (t.is_identity()) return v;
  const Geometry& g = v.geometry();
  const SourceMap map(g, t);
  const auto src = v.data();
  std::vector<float> out(g.voxel_count());
  const auto& s = g.shape;
  auto sample = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    x = std::clamp<std::int64_t>(x, 0, s[0] - 1);
    y = std::clamp<std::int64_t>(y, 0, s[1] - 1);
    z = std::clamp<std::int64_t>(z, 0, s[2] - 1);
    return static_cast<double>(src[g.index(x, y, z)]);
  };
#pragma omp parallel for schedule(static)
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        const auto q = map(x, y, z);
        const auto x0 = static_cast<std::int64_t>(std::floor(q[0]));
        const auto y0 = static_cast<std::int64_t>(std::floor(q[1]));
        const auto z0 = static_cast<std::int64_t>(std::floor(q[2]));
        const double fx = q[0] - x0, fy = q[1] - y0, fz = q[2] - z0;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
              if (w != 0.0) acc += w * sample(x0 + dx, y0 + dy, z0 + dz);
            }
        out[g.index(x, y, z)] = static_cast<float>(acc);
      }
  return Volume(g, std::move(out));
}

LabelMap warp_nearest(const LabelMap& l, const SpatialTransform& t) {
  if (t.is_identity()) return l;
  const Geometry& g = l.geometry();
  const SourceMap map(g, t);
  const auto src = l.labels();
  std::vector<std::uint8_t> out(g.voxel_count(), 0);
  const auto& s = g.shape;
#pragma omp parallel for schedule(static)
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        const auto q = map(x, y, z);
        const auto xi = static_cast<std::int64_t>(std::floor(q[0] + 0.5));
        const auto yi = static_cast<std::int64_t>(std::floor(q[1] + 0.5));
        const auto zi = static_cast<std::int64_t>(std::floor(q[2] + 0.5));
        if (g.contains(xi, yi, zi)) out[g.index(x, y, z)] = src[g.index(xi, yi, zi)];
      }
  return LabelMap(g, std::move(out), l.scheme());
}

Volume apply_intensity_augmentations(const AugmentationConfig& cfg, const Volume& v,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto src = v.data();
  std::vector<float> data(src.begin(), src.end());
  auto stats = [&] {
    double mean = 0.0;
    for (float x : data) mean += x;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (float x : data) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / static_cast<double>(data.size()))};
  };

  if (cfg.noise && unit(rng) < cfg.noise_prob) {
    const double sigma = std::uniform_real_distribution<double>(0.0, cfg.noise_max_sigma)(rng) *
                         stats().second;
    if (sigma > 0.0) {
      std::normal_distribution<double> n(0.0, sigma);
      for (auto& x : data) x = static_cast<float>(x + n(rng));
    }
  }
  if (cfg.contrast && unit(rng) < cfg.contrast_prob) {
    const double f = std::uniform_real_distribution<double>(cfg.contrast_min, cfg.contrast_max)(rng);
    const double mean = stats().first;
    for (auto& x : data) x = static_cast<float>((x - mean) * f + mean);
  }
  if (cfg.gamma && unit(rng) < cfg.gamma_prob) {
    const double gm = std::uniform_real_distribution<double>(cfg.gamma_min, cfg.gamma_max)(rng);
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    const double mn = *lo, range = *hi - *lo;
    if (range > 0.0)
      for (auto& x : data) x = static_cast<float>(mn + range * std::pow((x - mn) / range, gm));
  }
  if (cfg.inversion && unit(rng) < cfg.inversion_prob) {
    const double mean = stats().first;
    for (auto& x : data) x = static_cast<float>(2.0 * mean - x);
  }
  return Volume(v.geometry(), std::move(data));
}

std::pair<Volume, LabelMap> apply_augmentations(const AugmentationConfig& cfg, const Volume& v,
                                                const LabelMap& l, std::mt19937_64& rng) {
  cfg.validate();
  if (!v.geometry().same_grid(l.geometry()))
    throw std::invalid_argument("image and labels are not on the same grid");
  const SpatialTransform t = sample_spatial_transform(cfg, rng);
  Volume image = warp_linear(v, t);
  LabelMap labels = warp_nearest(l, t);
  image = apply_intensity_augmentations(cfg, image, rng);
  return {std::move(image), std::move(labels)};
}

}  // namespace tassnet
