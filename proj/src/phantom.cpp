#include "tassnet/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "tassnet/config_io.hpp"
#include "tassnet/nifti_io.hpp"

namespace tassnet {

void PhantomSpec::validate() const {
  Geometry(shape, spacing).validate();
  for (const AtriumSpec* a : {&la, &ra}) {
    for (int i = 0; i < 3; ++i) {
      if (!(a->semi_axes[i] > 0.0)) throw std::invalid_argument("semi-axes must be positive");
      if (a->wall < spacing[i])
        throw std::invalid_argument("wall thickness must cover at least one voxel along every axis");
      if (a->wall >= a->semi_axes[i])
        throw std::invalid_argument("wall thickness must be smaller than every semi-axis");
    }
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
}

namespace {

double radius(const AtriumSpec& a, const std::array<double, 3>& p, double shrink) {
  double r = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = (p[i] - a.center[i]) / (a.semi_axes[i] - shrink);
    r += d * d;
  }
  return r;
}

}  // namespace

std::pair<Volume, LabelMap> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry g(spec.shape, spec.spacing);
  std::vector<std::uint8_t> labels(g.voxel_count(), fine_class::background);
  struct Role {
    const AtriumSpec* a;
    std::uint8_t wall, cavity;
  };
  const Role roles[2] = {{&spec.la, fine_class::la_wall, fine_class::la_cavity},
                         {&spec.ra, fine_class::ra_wall, fine_class::ra_cavity}};
  const auto& s = spec.shape;
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        const std::array<double, 3> p{x * spec.spacing[0], y * spec.spacing[1], z * spec.spacing[2]};
        std::uint8_t& l = labels[g.index(x, y, z)];
        for (const Role& r : roles) {
          if (radius(*r.a, p, 0.0) > 1.0) continue;
          if (l != fine_class::background)
            throw std::invalid_argument("atrial shells overlap at voxel (" + std::to_string(x) +
                                        ", " + std::to_string(y) + ", " + std::to_string(z) + ")");
          l = radius(*r.a, p, r.a->wall) <= 1.0 ? r.cavity : r.wall;
        }
      }

  auto is_wall = [](std::uint8_t v) { return v == fine_class::la_wall || v == fine_class::ra_wall; };
  static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        std::uint8_t& l = labels[g.index(x, y, z)];
        if (!is_wall(l)) continue;
        bool open = false;
        for (const auto& o : off) {
          const std::int64_t nx = x + o[0], ny = y + o[1], nz = z + o[2];
          if (!g.contains(nx, ny, nz) || !is_wall(labels[g.index(nx, ny, nz)])) {
            open = true;
            break;
          }
        }
        if (!open) l = l == fine_class::la_wall ? fine_class::la_cavity : fine_class::ra_cavity;
      }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::vector<float> image(g.voxel_count());
  for (std::size_t i = 0; i < image.size(); ++i) {
    double v = spec.background_intensity;
    if (is_wall(labels[i])) v = spec.wall_intensity;
    else if (labels[i] != fine_class::background) v = spec.cavity_intensity;
    if (spec.noise_sigma > 0.0) v += noise(rng);
    image[i] = static_cast<float>(v);
  }
  return {Volume(g, std::move(image)), LabelMap(g, std::move(labels), ClassScheme::fine())};
}

PhantomSpec vary_phantom(const PhantomSpec& base, std::uint64_t seed, double jitter_mm,
                         double scale_jitter) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(-jitter_mm, jitter_mm);
  std::uniform_real_distribution<double> scale(1.0 - scale_jitter, 1.0 + scale_jitter);
  for (int attempt = 0; attempt < 100; ++attempt) {
    PhantomSpec s = base;
    s.seed = rng();
    for (AtriumSpec* a : {&s.la, &s.ra})
      for (int i = 0; i < 3; ++i) {
        a->center[i] += shift(rng);
        a->semi_axes[i] *= scale(rng);
      }
    try {
      generate_phantom(s);
      return s;
    } catch (const std::invalid_argument&) {
    }
  }
  throw std::runtime_error("could not place separated atria after 100 attempts");
}

PatientScans write_phantom_dataset(const std::filesystem::path& dir, int patients,
                                   int scans_per_patient, const PhantomSpec& base,
                                   std::uint64_t seed) {
  if (patients < 1 || scans_per_patient < 1)
    throw std::invalid_argument("patient and scan counts must be positive");
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  PatientScans map;
  std::mt19937_64 rng(seed);
  for (int p = 0; p < patients; ++p) {
    char pid[32];
    std::snprintf(pid, sizeof(pid), "patient%03d", p);
    for (int s = 0; s < scans_per_patient; ++s) {
      const std::string scan = std::string(pid) + "_scan" + std::to_string(s);
      const auto [image, labels] = generate_phantom(vary_phantom(base, rng()));
      save_volume(image, dir / "images" / (scan + ".nii.gz"));
      save_label_map(labels, dir / "labels" / (scan + ".nii.gz"));
      map[pid].push_back(scan);
    }
  }
  write_json_file(nlohmann::json(map), dir / "patients.json");
  return map;
}

PatientScans read_patients(const std::filesystem::path& dataset_dir) {
  return read_json_file(dataset_dir / "patients.json").get<PatientScans>();
}

}  // namespace tassnet
