#pragma once

// Independent reference computations used as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "tassnet/metrics.hpp"
#include "tassnet/volume.hpp"

namespace oracle {

using tassnet::BinaryMask;
using tassnet::Index3;
using tassnet::Spacing;

inline double lr_direct(int R, int Z, double lr_r, double lr_0, double M, int i) {
  const int Tc = R / Z;
  const int tc = i % Tc;
  if (tc == 0) return lr_r;
  return lr_0 + (lr_r - lr_0) * std::exp(-(M / Tc) * tc);
}

inline bool inside(const BinaryMask& m, long x, long y, long z) {
  if (x < 0 || y < 0 || z < 0 || x >= m.shape[0] || y >= m.shape[1] || z >= m.shape[2]) return false;
  return m.data[static_cast<std::size_t>(x + m.shape[0] * (y + m.shape[1] * z))] != 0;
}

inline std::vector<Index3> surface(const BinaryMask& m) {
  std::vector<Index3> out;
  for (long z = 0; z < m.shape[2]; ++z)
    for (long y = 0; y < m.shape[1]; ++y)
      for (long x = 0; x < m.shape[0]; ++x) {
        if (!inside(m, x, y, z)) continue;
        const int nb = inside(m, x + 1, y, z) + inside(m, x - 1, y, z) + inside(m, x, y + 1, z) +
                       inside(m, x, y - 1, z) + inside(m, x, y, z + 1) + inside(m, x, y, z - 1);
        if (nb < 6) out.push_back({x, y, z});
      }
  return out;
}

/// All-pairs nearest distances, both directions pooled.
inline std::vector<double> pooled(const BinaryMask& a, const BinaryMask& b, const Spacing& sp) {
  const auto sa = surface(a), sb = surface(b);
  std::vector<double> out;
  auto directed = [&](const std::vector<Index3>& from, const std::vector<Index3>& to) {
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        double d2 = 0.0;
        for (int i = 0; i < 3; ++i) {
          const double d = (p[i] - q[i]) * sp[i];
          d2 += d * d;
        }
        best = std::min(best, d2);
      }
      out.push_back(std::sqrt(best));
    }
  };
  directed(sa, sb);
  directed(sb, sa);
  return out;
}

inline double asd(const BinaryMask& a, const BinaryMask& b, const Spacing& sp) {
  const auto d = pooled(a, b, sp);
  double s = 0.0;
  for (double v : d) s += v;
  return s / static_cast<double>(d.size());
}

/// numpy-style linear percentile.
inline double hd95(const BinaryMask& a, const BinaryMask& b, const Spacing& sp) {
  auto d = pooled(a, b, sp);
  std::sort(d.begin(), d.end());
  const double h = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (h - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

inline double max_directed(const BinaryMask& a, const BinaryMask& b, const Spacing& sp) {
  const auto d = pooled(a, b, sp);
  return *std::max_element(d.begin(), d.end());
}

inline double dsc(const BinaryMask& a, const BinaryMask& b) {
  long pa = 0, pb = 0, both = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    pa += a.data[i] != 0;
    pb += b.data[i] != 0;
    both += a.data[i] && b.data[i];
  }
  if (pa + pb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(pa + pb);
}

/// Random blobby mask: a few random boxes, guaranteed non-empty.
inline BinaryMask random_mask(const Index3& s, std::mt19937_64& rng) {
  BinaryMask m(s, std::vector<std::uint8_t>(static_cast<std::size_t>(s[0] * s[1] * s[2]), 0));
  std::uniform_int_distribution<int> boxes(1, 3);
  const int nb = boxes(rng);
  for (int b = 0; b < nb; ++b) {
    long lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      std::uniform_int_distribution<long> p(0, s[a] - 1);
      lo[a] = p(rng);
      hi[a] = std::min<long>(s[a] - 1, lo[a] + std::uniform_int_distribution<long>(0, s[a] / 2)(rng));
    }
    for (long z = lo[2]; z <= hi[2]; ++z)
      for (long y = lo[1]; y <= hi[1]; ++y)
        for (long x = lo[0]; x <= hi[0]; ++x) m.data[static_cast<std::size_t>(x + s[0] * (y + s[1] * z))] = 1;
  }
  // sprinkle isolated voxels too
  std::bernoulli_distribution sprinkle(0.02);
  for (auto& v : m.data)
    if (sprinkle(rng)) v = 1;
  return m;
}

inline Spacing random_spacing(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 3.0);
  return {u(rng), u(rng), u(rng)};
}

inline tassnet::LabelMap random_labels(const Index3& s, int classes, std::mt19937_64& rng,
                                       const tassnet::ClassScheme& scheme) {
  std::vector<std::uint8_t> l(static_cast<std::size_t>(s[0] * s[1] * s[2]));
  std::uniform_int_distribution<int> c(0, classes - 1);
  for (auto& v : l) v = static_cast<std::uint8_t>(c(rng));
  return tassnet::LabelMap(tassnet::Geometry(s, {1.0, 1.0, 1.0}), std::move(l), scheme);
}

/// Random valid probability map with `classes` channels.
inline tassnet::ProbabilityMap random_probs(const Index3& s, const tassnet::ClassScheme& scheme,
                                            std::mt19937_64& rng) {
  const std::size_t n = static_cast<std::size_t>(s[0] * s[1] * s[2]);
  const int k = scheme.size();
  std::vector<float> p(n * static_cast<std::size_t>(k));
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t v = 0; v < n; ++v) {
    float sum = 0.0f;
    for (int c = 0; c < k; ++c) sum += p[c * n + v] = u(rng) + 1e-3f;
    for (int c = 0; c < k; ++c) p[c * n + v] /= sum;
  }
  return tassnet::ProbabilityMap(tassnet::Geometry(s, {1.0, 1.0, 1.0}), scheme, std::move(p));
}

}  // namespace oracle
