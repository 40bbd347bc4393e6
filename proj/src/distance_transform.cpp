#include "tassnet/distance_transform.hpp"

#include <limits>
#include <stdexcept>

namespace tassnet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower envelope of parabolas f(q) + (h (p - q))^2 over a strided line.
struct Line1D {
  std::vector<double> f, d;
  std::vector<int> v;
  std::vector<double> z;

  explicit Line1D(std::size_t n) : f(n), d(n), v(n), z(n + 1) {}

  void run(double* data, std::size_t n, std::size_t stride, double h) {
    const double h2 = h * h;
    int first = -1;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = data[i * stride];
      if (first < 0 && f[i] < kInf) first = static_cast<int>(i);
    }
    if (first < 0) return;
    int k = 0;
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = first + 1; q < static_cast<int>(n); ++q) {
      if (f[q] == kInf) continue;
      double s;
      while (true) {
        const int p = v[k];
        s = ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
        if (s <= z[k] && k > 0) {
          --k;
          continue;
        }
        break;
      }
      if (s <= z[k]) {
        // k == 0 and the new parabola dominates everywhere
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < static_cast<int>(n); ++q) {
      while (z[k + 1] < q) ++k;
      const double dq = h * (q - v[k]);
      d[q] = dq * dq + f[v[k]];
    }
    for (std::size_t i = 0; i < n; ++i) data[i * stride] = d[i];
  }
};

std::vector<double> edt(std::span<const std::uint8_t> feature, const Index3& shape,
                        const Spacing& spacing, bool parallel) {
  const std::size_t total = static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
  if (feature.size() != total) throw std::invalid_argument("mask size does not match its shape");
  for (int a = 0; a < 3; ++a)
    if (shape[a] < 1 || !(spacing[a] > 0.0))
      throw std::invalid_argument("distance transform needs positive extents and spacing");
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = feature[i] ? 0.0 : kInf;

  const std::int64_t X = shape[0], Y = shape[1];
  const std::size_t strides[3] = {1, static_cast<std::size_t>(X), static_cast<std::size_t>(X * Y)};
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = static_cast<std::size_t>(shape[axis]);
    const std::int64_t lines = static_cast<std::int64_t>(total / n);
    const std::int64_t a_ext = axis == 0 ? Y : X;  // first of the two remaining axes
#pragma omp parallel if (parallel)
    {
      Line1D line(n);
#pragma omp for schedule(static)
      for (std::int64_t l = 0; l < lines; ++l) {
        const std::int64_t u = l % a_ext, w = l / a_ext;
        std::size_t base;
        if (axis == 0) base = static_cast<std::size_t>(X * (u + Y * w));
        else if (axis == 1) base = static_cast<std::size_t>(u + X * Y * w);
        else base = static_cast<std::size_t>(u + X * w);
        line.run(out.data() + base, n, strides[axis], spacing[axis]);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> squared_distance_transform(std::span<const std::uint8_t> feature,
                                               const Index3& shape, const Spacing& spacing) {
  return edt(feature, shape, spacing, true);
}

std::vector<double> squared_distance_transform_serial(std::span<const std::uint8_t> feature,
                                                      const Index3& shape, const Spacing& spacing) {
  return edt(feature, shape, spacing, false);
}

}  // namespace tassnet
