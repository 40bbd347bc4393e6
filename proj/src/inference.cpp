#include "tassnet/inference.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tassnet/trainer.hpp"

namespace tassnet {
namespace {

std::string axis_shape(const Index3& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

void check_scheme(const Network& net, const ClassScheme& scheme) {
  if (net.config().num_classes != scheme.size())
    throw std::invalid_argument("network predicts " + std::to_string(net.config().num_classes) +
                                " classes but the scheme has " + std::to_string(scheme.size()));
}

// (n, K, d, h, w) softmax output for sample n -> channel-major voxel order.
void copy_sample(const Tensor& probs, int n, std::size_t voxel_offset, std::size_t total_voxels,
                 std::vector<float>& out) {
  const std::size_t m = probs.spatial_size();
  for (int k = 0; k < probs.channels(); ++k) {
    const float* src = probs.channel_ptr(n, k);
    std::copy(src, src + m, out.begin() + static_cast<std::ptrdiff_t>(k * total_voxels + voxel_offset));
  }
}

}  // namespace

ProbabilityMap predict_3d(Network& net, const Volume& roi, const ClassScheme& scheme) {
  check_scheme(net, scheme);
  if (net.config().dims != 3) throw std::invalid_argument("predict_3d needs a 3D network");
  if (roi.shape() != net.config().input_shape)
    throw std::invalid_argument("ROI shape " + axis_shape(roi.shape()) +
                                " does not match the configured patch " +
                                axis_shape(net.config().input_shape));
  const Tensor p = net.predict(image_tensor({&roi}));
  std::vector<float> out(p.data.size());
  copy_sample(p, 0, 0, roi.geometry().voxel_count(), out);
  return ProbabilityMap(roi.geometry(), scheme, std::move(out));
}

ProbabilityMap predict_2d(Network& net, const Volume& roi, const ClassScheme& scheme,
                          int slices_per_batch) {
  check_scheme(net, scheme);
  const auto& cfg = net.config();
  if (cfg.dims != 2) throw std::invalid_argument("predict_2d needs a 2D network");
  if (slices_per_batch < 1) throw std::invalid_argument("slices_per_batch must be positive");
  const Index3& s = roi.shape();
  if (s[0] != cfg.input_shape[0] || s[1] != cfg.input_shape[1])
    throw std::invalid_argument("ROI shape " + axis_shape(s) + " does not match the configured " +
                                std::to_string(cfg.input_shape[0]) + "x" +
                                std::to_string(cfg.input_shape[1]) + " slice");
  const std::size_t plane = static_cast<std::size_t>(s[0] * s[1]);
  const std::size_t total = roi.geometry().voxel_count();
  std::vector<float> out(total * static_cast<std::size_t>(scheme.size()));
  const auto src = roi.data();
  for (std::int64_t z0 = 0; z0 < s[2]; z0 += slices_per_batch) {
    const int n = static_cast<int>(std::min<std::int64_t>(slices_per_batch, s[2] - z0));
    Tensor x(n, 1, 1, static_cast<int>(s[1]), static_cast<int>(s[0]));
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(z0 * plane),
              src.begin() + static_cast<std::ptrdiff_t>((z0 + n) * plane), x.data.begin());
    const Tensor p = net.predict(x);
    for (int i = 0; i < n; ++i) copy_sample(p, i, static_cast<std::size_t>(z0 + i) * plane, total, out);
  }
  return ProbabilityMap(roi.geometry(), scheme, std::move(out));
}

ProbabilityMap ensemble(const std::vector<ProbabilityMap>& maps, const std::vector<double>& weights) {
  if (maps.empty()) throw std::invalid_argument("ensemble needs at least one map");
  std::vector<double> w = weights.empty() ? std::vector<double>(maps.size(), 1.0) : weights;
  if (w.size() != maps.size())
    throw std::invalid_argument("ensemble got " + std::to_string(w.size()) + " weights for " +
                                std::to_string(maps.size()) + " maps");
  double wsum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument("ensemble weights must be non-negative");
    wsum += x;
  }
  if (!weights.empty() && std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("ensemble weights must sum to 1");
  const ProbabilityMap& first = maps.front();
  for (const auto& m : maps) {
    if (!m.geometry().same_grid(first.geometry()))
      throw std::invalid_argument("ensemble maps are not on the same grid");
    if (m.scheme() != first.scheme())
      throw std::invalid_argument("ensemble maps use different class schemes");
  }
  const std::size_t n = first.probs().size();
  std::vector<float> out(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t m = 0; m < maps.size(); ++m) acc += w[m] * maps[m].probs()[i];
    out[i] = static_cast<float>(acc / wsum);
  }
  return ProbabilityMap(first.geometry(), first.scheme(), std::move(out));
}

void PipelineModels::validate() const {
  auto role = [](const std::vector<Checkpoint>& cks, const char* name, int dims, int classes) {
    if (cks.empty()) throw std::invalid_argument(std::string("no ") + name + " checkpoint");
    for (const auto& c : cks) {
      const auto& cfg = c.network.config();
      if (cfg.dims != dims || cfg.num_classes != classes || c.scheme.size() != classes)
        throw std::invalid_argument(std::string(name) + " checkpoint must be a " +
                                    std::to_string(dims) + "D network with " +
                                    std::to_string(classes) + " classes");
      if (!(cfg.input_shape == cks.front().network.config().input_shape))
        throw std::invalid_argument(std::string(name) + " checkpoints disagree on input shape");
    }
  };
  role(coarse, "coarse", 3, ClassScheme::coarse().size());
  role(fine_2d, "fine 2D", 2, ClassScheme::fine().size());
  role(fine_3d, "fine 3D", 3, ClassScheme::fine().size());
  const Index3 p = patch_size();
  const Index3& s2 = fine_2d.front().network.config().input_shape;
  if (s2[0] != p[0] || s2[1] != p[1])
    throw std::invalid_argument("fine 2D and fine 3D checkpoints disagree on the in-plane patch size");
}

Index3 PipelineModels::patch_size() const {
  if (fine_3d.empty()) throw std::invalid_argument("no fine 3D checkpoint");
  return fine_3d.front().network.config().input_shape;
}

double PipelineResult::total_seconds() const {
  double t = 0.0;
  for (const auto& s : timings) t += s.seconds;
  return t;
}

Volume downsample_xy(const Volume& v, int f) {
  if (f < 1) throw std::invalid_argument("downsampling factor must be positive");
  if (f == 1) return v;
  const Index3& s = v.shape();
  const Index3 o{(s[0] + f - 1) / f, (s[1] + f - 1) / f, s[2]};
  std::vector<float> out(static_cast<std::size_t>(o[0] * o[1] * o[2]));
  Geometry g(o, {v.spacing()[0] * f, v.spacing()[1] * f, v.spacing()[2]});
  for (std::int64_t z = 0; z < o[2]; ++z)
    for (std::int64_t y = 0; y < o[1]; ++y)
      for (std::int64_t x = 0; x < o[0]; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (std::int64_t yy = y * f; yy < std::min<std::int64_t>((y + 1) * f, s[1]); ++yy)
          for (std::int64_t xx = x * f; xx < std::min<std::int64_t>((x + 1) * f, s[0]); ++xx) {
            acc += v.at(xx, yy, z);
            ++cnt;
          }
        out[g.index(x, y, z)] = static_cast<float>(acc / cnt);
      }
  return Volume(g, std::move(out));
}

LabelMap downsample_xy(const LabelMap& l, int f) {
  if (f < 1) throw std::invalid_argument("downsampling factor must be positive");
  const Index3& s = l.shape();
  const Index3 o{(s[0] + f - 1) / f, (s[1] + f - 1) / f, s[2]};
  Geometry g(o, {l.spacing()[0] * f, l.spacing()[1] * f, l.spacing()[2]});
  std::vector<std::uint8_t> out(g.voxel_count(), 0);
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        auto& d = out[g.index(x / f, y / f, z)];
        d = std::max(d, l.at(x, y, z));
      }
  return LabelMap(g, std::move(out), l.scheme());
}

int coarse_downsample_factor(const Index3& s, std::size_t budget) {
  if (budget == 0) return 1;
  int f = 1;
  while (static_cast<std::size_t>(((s[0] + f - 1) / f) * ((s[1] + f - 1) / f) * s[2]) > budget) {
    if (f >= s[0] && f >= s[1])
      throw std::invalid_argument("coarse voxel budget is smaller than one slice column");
    ++f;
  }
  return f;
}

namespace {

ProbabilityMap average_role(std::vector<Checkpoint>& cks, const Volume& v, bool three_d) {
  std::vector<ProbabilityMap> maps;
  for (auto& c : cks)
    maps.push_back(three_d ? predict_3d(c.network, v, c.scheme) : predict_2d(c.network, v, c.scheme));
  return maps.size() == 1 ? std::move(maps.front()) : ensemble(maps);
}

}  // namespace

PipelineResult full_pipeline(PipelineModels& models, const Volume& v, const PipelineOptions& opts) {
  PipelineResult r;
  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + name + "': " + e.what());
    }
    r.timings.push_back(
        {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  };

  stage("validate", [&] { models.validate(); });
  Volume normalized;
  stage("normalize", [&] { normalized = normalize_intensity(v); });

  stage("coarse", [&] {
    const int f = coarse_downsample_factor(v.shape(), opts.coarse_voxel_budget);
    r.coarse_downsample = f;
    const Volume in = downsample_xy(normalized, f);
    std::vector<ProbabilityMap> maps;
    for (auto& c : models.coarse) {
      Network& net = c.network;
      const Tensor p = net.predict(image_tensor({&in}));
      std::vector<float> out(p.data.begin(), p.data.end());
      maps.emplace_back(in.geometry(), c.scheme, std::move(out));
    }
    const LabelMap coarse = argmax(maps.size() == 1 ? maps.front() : ensemble(maps));
    r.center = center_of_mass(coarse, {1});
    if (r.center.fallback) {
      for (int a = 0; a < 3; ++a)
        r.center.position[a] = (static_cast<double>(v.shape()[a]) - 1.0) / 2.0;
    } else if (f > 1) {
      for (int a = 0; a < 2; ++a) r.center.position[a] = r.center.position[a] * f + (f - 1) / 2.0;
    }
  });

  Patch patch;
  stage("extract", [&] { patch = extract_patch(normalized, r.center.position, models.patch_size()); });
  ProbabilityMap p2, p3;
  stage("fine_2d", [&] { p2 = average_role(models.fine_2d, patch.volume, false); });
  stage("fine_3d", [&] { p3 = average_role(models.fine_3d, patch.volume, true); });
  stage("ensemble", [&] {
    const ProbabilityMap fused = ensemble({p2, p3}, {opts.weight_2d, opts.weight_3d});
    r.window = patch.window;
    r.labels = restore_to_original(argmax(fused), patch.window, v.geometry());
    r.probabilities = restore_to_original(fused, patch.window, v.geometry());
  });
  return r;
}

std::vector<Checkpoint> load_role(const std::string& role,
                                  const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw std::runtime_error("stage '" + role + "': no checkpoint given");
  std::vector<Checkpoint> out;
  for (const auto& p : paths) {
    try {
      out.push_back(load_checkpoint(p));
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + role + "': " + e.what());
    }
  }
  return out;
}

}  // namespace tassnet
