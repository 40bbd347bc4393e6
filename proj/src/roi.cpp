#include "tassnet/roi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tassnet {

void PatchWindow::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1) throw std::invalid_argument("patch size must be positive");
    if (start[a] < 0 || pad_before[a] < 0 || pad_after[a] < 0)
      throw std::invalid_argument("patch window has negative start or padding");
    if (start[a] + size[a] - pad_before[a] - pad_after[a] > original_shape[a])
      throw std::invalid_argument("patch window exceeds the original grid");
  }
}

CenterOfMass center_of_mass(const LabelMap& l, const std::set<int>& foreground) {
  const auto& s = l.shape();
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::size_t count = 0;
  const auto labels = l.labels();
  std::array<bool, 256> is_fg{};
  for (int id : foreground)
    if (id >= 0 && id < 256) is_fg[static_cast<std::size_t>(id)] = true;
  std::size_t i = 0;
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x, ++i) {
        if (!is_fg[labels[i]]) continue;
        sum[0] += static_cast<double>(x);
        sum[1] += static_cast<double>(y);
        sum[2] += static_cast<double>(z);
        ++count;
      }
  CenterOfMass com;
  com.voxel_count = count;
  if (count == 0) {
    com.fallback = true;
    for (int a = 0; a < 3; ++a) com.position[a] = (static_cast<double>(s[a]) - 1.0) / 2.0;
  } else {
    for (int a = 0; a < 3; ++a) com.position[a] = sum[a] / static_cast<double>(count);
  }
  return com;
}

PatchWindow plan_window(const Index3& original_shape, const std::array<double, 3>& com,
                        const Index3& size) {
  PatchWindow w;
  w.size = size;
  w.original_shape = original_shape;
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1) throw std::invalid_argument("patch size must be positive");
    const std::int64_t n = original_shape[a];
    if (n < size[a]) {
      const std::int64_t pad = size[a] - n;
      w.pad_before[a] = pad / 2;
      w.pad_after[a] = pad - pad / 2;
      w.start[a] = 0;
    } else {
      const double ideal = std::floor(com[a] - static_cast<double>(size[a]) / 2.0 + 0.5);
      const auto start = static_cast<std::int64_t>(ideal);
      w.start[a] = std::clamp<std::int64_t>(start, 0, n - size[a]);
    }
  }
  return w;
}

namespace {

template <typename T, typename Src>
std::vector<T> crop_values(const Src& src, const Geometry& g, const PatchWindow& w, T fill) {
  const auto& size = w.size;
  std::vector<T> out(static_cast<std::size_t>(size[0] * size[1] * size[2]), fill);
  std::size_t i = 0;
  for (std::int64_t pz = 0; pz < size[2]; ++pz) {
    const std::int64_t z = w.start[2] + pz - w.pad_before[2];
    for (std::int64_t py = 0; py < size[1]; ++py) {
      const std::int64_t y = w.start[1] + py - w.pad_before[1];
      for (std::int64_t px = 0; px < size[0]; ++px, ++i) {
        const std::int64_t x = w.start[0] + px - w.pad_before[0];
        if (g.contains(x, y, z)) out[i] = src[g.index(x, y, z)];
      }
    }
  }
  return out;
}

Geometry patch_geometry(const Geometry& original, const PatchWindow& w) {
  Affine affine = original.affine;
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a)
      affine[r][3] += affine[r][a] * static_cast<double>(w.start[a] - w.pad_before[a]);
  }
  return Geometry(w.size, original.spacing, affine);
}

void check_window_matches(const Geometry& original, const PatchWindow& w) {
  if (original.shape != w.original_shape)
    throw std::invalid_argument("patch window was planned for a different grid");
  w.validate();
}

}  // namespace

Volume crop(const Volume& v, const PatchWindow& w) {
  check_window_matches(v.geometry(), w);
  return Volume(patch_geometry(v.geometry(), w), crop_values<float>(v.data(), v.geometry(), w, 0.0f));
}

LabelMap crop(const LabelMap& l, const PatchWindow& w) {
  check_window_matches(l.geometry(), w);
  return LabelMap(patch_geometry(l.geometry(), w),
                  crop_values<std::uint8_t>(l.labels(), l.geometry(), w, 0), l.scheme());
}

Patch extract_patch(const Volume& v, const std::array<double, 3>& com, const Index3& size) {
  PatchWindow w = plan_window(v.shape(), com, size);
  Volume patch = crop(v, w);
  return {std::move(patch), w};
}

LabelMap restore_to_original(const LabelMap& patch, const PatchWindow& w, const Geometry& original) {
  if (patch.shape() != w.size)
    throw std::invalid_argument("patch shape does not match the window size");
  check_window_matches(original, w);
  std::vector<std::uint8_t> out(original.voxel_count(), 0);
  const auto src = patch.labels();
  std::size_t i = 0;
  for (std::int64_t pz = 0; pz < w.size[2]; ++pz)
    for (std::int64_t py = 0; py < w.size[1]; ++py)
      for (std::int64_t px = 0; px < w.size[0]; ++px, ++i) {
        const std::int64_t x = w.start[0] + px - w.pad_before[0];
        const std::int64_t y = w.start[1] + py - w.pad_before[1];
        const std::int64_t z = w.start[2] + pz - w.pad_before[2];
        if (original.contains(x, y, z)) out[original.index(x, y, z)] = src[i];
      }
  return LabelMap(original, std::move(out), patch.scheme());
}

ProbabilityMap restore_to_original(const ProbabilityMap& patch, const PatchWindow& w,
                                   const Geometry& original) {
  if (patch.shape() != w.size)
    throw std::invalid_argument("patch shape does not match the window size");
  check_window_matches(original, w);
  const std::size_t n = original.voxel_count();
  const std::size_t pn = patch.geometry().voxel_count();
  const int k = patch.num_classes();
  std::vector<float> out(n * static_cast<std::size_t>(k), 0.0f);
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 1.0f);
  const auto src = patch.probs();
  std::size_t i = 0;
  for (std::int64_t pz = 0; pz < w.size[2]; ++pz)
    for (std::int64_t py = 0; py < w.size[1]; ++py)
      for (std::int64_t px = 0; px < w.size[0]; ++px, ++i) {
        const std::int64_t x = w.start[0] + px - w.pad_before[0];
        const std::int64_t y = w.start[1] + py - w.pad_before[1];
        const std::int64_t z = w.start[2] + pz - w.pad_before[2];
        if (!original.contains(x, y, z)) continue;
        const std::size_t o = original.index(x, y, z);
        for (int c = 0; c < k; ++c)
          out[static_cast<std::size_t>(c) * n + o] = src[static_cast<std::size_t>(c) * pn + i];
      }
  return ProbabilityMap(original, patch.scheme(), std::move(out));
}

LabelMap coarse_target(const LabelMap& fine) {
  if (fine.scheme() != ClassScheme::fine())
    throw std::invalid_argument("coarse_target expects the fine class scheme");
  const auto src = fine.labels();
  std::vector<std::uint8_t> out(src.size());
  std::transform(src.begin(), src.end(), out.begin(),
                 [](std::uint8_t l) { return static_cast<std::uint8_t>(l != 0); });
  return LabelMap(fine.geometry(), std::move(out), ClassScheme::coarse());
}

namespace {

std::string join(const Index3& v) {
  std::ostringstream s;
  s << v[0] << ' ' << v[1] << ' ' << v[2];
  return s.str();
}

}  // namespace

void write_window_sidecar(const PatchWindow& w, const CenterOfMass& com,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "start = " << join(w.start) << '\n'
      << "size = " << join(w.size) << '\n'
      << "pad_before = " << join(w.pad_before) << '\n'
      << "pad_after = " << join(w.pad_after) << '\n'
      << "original_shape = " << join(w.original_shape) << '\n'
      << std::setprecision(17) << "center_of_mass = " << com.position[0] << ' '
      << com.position[1] << ' ' << com.position[2] << '\n'
      << "center_of_mass_fallback = " << (com.fallback ? "true" : "false") << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

PatchWindow read_window_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open window sidecar");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto triple = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(path.string() + ": missing key '" + key + "'");
    std::istringstream s(it->second);
    Index3 v{};
    if (!(s >> v[0] >> v[1] >> v[2]))
      throw std::runtime_error(path.string() + ": malformed value for '" + key + "'");
    return v;
  };
  PatchWindow w;
  w.start = triple("start");
  w.size = triple("size");
  w.pad_before = triple("pad_before");
  w.pad_after = triple("pad_after");
  w.original_shape = triple("original_shape");
  w.validate();
  return w;
}

}  // namespace tassnet
