#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tassnet/roi.hpp"

using namespace tassnet;

namespace {

LabelMap with_voxels(const Index3& s, const std::vector<std::pair<Index3, int>>& voxels) {
  const Geometry g(s, {1, 1, 1});
  std::vector<std::uint8_t> l(g.voxel_count(), 0);
  for (const auto& [p, k] : voxels) l[g.index(p[0], p[1], p[2])] = static_cast<std::uint8_t>(k);
  return LabelMap(g, std::move(l), ClassScheme::fine());
}

const std::set<int> kForeground{1, 2, 3, 4};

}  // namespace

TEST_CASE("center_of_mass") {
  SUBCASE("single voxel") {
    const auto c = center_of_mass(with_voxels({30, 30, 10}, {{{10, 20, 5}, 3}}), kForeground);
    CHECK(c.position == std::array<double, 3>{10.0, 20.0, 5.0});
    CHECK_FALSE(c.fallback);
  }
  SUBCASE("two voxels") {
    const auto c = center_of_mass(with_voxels({11, 1, 1}, {{{0, 0, 0}, 1}, {{10, 0, 0}, 2}}), kForeground);
    CHECK(c.position == std::array<double, 3>{5.0, 0.0, 0.0});
  }
  SUBCASE("empty foreground falls back to the grid center") {
    const auto c = center_of_mass(LabelMap::background(Geometry({576, 576, 44}, {1, 1, 1}), ClassScheme::fine()),
                                  kForeground);
    CHECK(c.fallback);
    CHECK(c.position == std::array<double, 3>{287.5, 287.5, 21.5});
  }
  SUBCASE("only the requested classes count") {
    const auto c = center_of_mass(with_voxels({10, 1, 1}, {{{2, 0, 0}, 1}, {{8, 0, 0}, 4}}), {4});
    CHECK(c.position[0] == 8.0);
  }
  SUBCASE("translation equivariance") {
    std::mt19937_64 rng(2);
    std::vector<std::pair<Index3, int>> vox, shifted;
    std::uniform_int_distribution<long> u(0, 9);
    for (int i = 0; i < 20; ++i) {
      Index3 p{u(rng), u(rng), u(rng)};
      vox.push_back({p, 1});
      shifted.push_back({{p[0] + 3, p[1] + 5, p[2] + 1}, 1});
    }
    const auto a = center_of_mass(with_voxels({20, 20, 20}, vox), kForeground);
    const auto b = center_of_mass(with_voxels({20, 20, 20}, shifted), kForeground);
    CHECK(b.position[0] == doctest::Approx(a.position[0] + 3));
    CHECK(b.position[1] == doctest::Approx(a.position[1] + 5));
    CHECK(b.position[2] == doctest::Approx(a.position[2] + 1));
  }
}

TEST_CASE("plan_window") {
  SUBCASE("centered window") {
    const auto w = plan_window({576, 576, 44}, {288, 288, 22}, {256, 256, 44});
    CHECK(w.start == Index3{160, 160, 0});
    CHECK(w.pad_before == Index3{0, 0, 0});
    CHECK(w.pad_after == Index3{0, 0, 0});
  }
  SUBCASE("clamped at the low edge") {
    const auto w = plan_window({576, 576, 44}, {10, 10, 22}, {256, 256, 44});
    CHECK(w.start == Index3{0, 0, 0});
  }
  SUBCASE("clamped at the high edge") {
    const auto w = plan_window({576, 576, 44}, {570, 288, 22}, {256, 256, 44});
    CHECK(w.start[0] == 320);
  }
  SUBCASE("symmetric padding for small grids") {
    const auto w = plan_window({200, 200, 44}, {100, 100, 22}, {256, 256, 44});
    CHECK(w.pad_before == Index3{28, 28, 0});
    CHECK(w.pad_after == Index3{28, 28, 0});
    CHECK(w.start == Index3{0, 0, 0});
  }
  SUBCASE("odd padding puts the extra voxel after") {
    const auto w = plan_window({5, 8, 8}, {2, 4, 4}, {8, 8, 8});
    CHECK(w.pad_before[0] == 1);
    CHECK(w.pad_after[0] == 2);
  }
}

TEST_CASE("extract_patch output shape and spacing") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<long> ext(1, 40);
  for (int t = 0; t < 30; ++t) {
    const Index3 s{ext(rng), ext(rng), ext(rng)};
    const Volume v(Geometry(s, {0.5, 0.7, 2.0}), std::vector<float>(static_cast<std::size_t>(s[0] * s[1] * s[2]), 1.0f));
    const auto p = extract_patch(v, {s[0] / 2.0, s[1] / 2.0, s[2] / 2.0}, {16, 12, 8});
    CHECK(p.volume.shape() == Index3{16, 12, 8});
    CHECK(p.volume.spacing() == v.spacing());
  }
}

TEST_CASE("restore_to_original") {
  SUBCASE("index arithmetic") {
    PatchWindow w;
    w.start = {160, 160, 0};
    w.size = {256, 256, 44};
    w.original_shape = {576, 576, 44};
    const auto patch = with_voxels({256, 256, 44}, {{{5, 5, 5}, 2}});
    const Geometry orig({576, 576, 44}, {1, 1, 1});
    const auto r = restore_to_original(patch, w, orig);
    CHECK(r.at(165, 165, 5) == 2);
    CHECK(r.count(2) == 1);
  }
  SUBCASE("all background") {
    const Geometry orig({40, 30, 10}, {1, 1, 1});
    const auto w = plan_window(orig.shape, {20, 15, 5}, {16, 16, 8});
    const auto r = restore_to_original(LabelMap::background(Geometry(w.size, {1, 1, 1}), ClassScheme::fine()), w, orig);
    CHECK(r.count(0) == orig.voxel_count());
  }
  SUBCASE("shape mismatch") {
    const Geometry orig({40, 30, 10}, {1, 1, 1});
    const auto w = plan_window(orig.shape, {20, 15, 5}, {16, 16, 8});
    CHECK_THROWS(restore_to_original(LabelMap::background(Geometry({15, 16, 8}, {1, 1, 1}), ClassScheme::fine()), w, orig));
  }
  SUBCASE("probability maps: outside is certain background") {
    std::mt19937_64 rng(4);
    const Geometry orig({20, 20, 6}, {1, 1, 1});
    const auto w = plan_window(orig.shape, {4, 4, 3}, {8, 8, 4});
    const auto p = oracle::random_probs(w.size, ClassScheme::fine(), rng);
    const auto r = restore_to_original(p, w, orig);
    const std::size_t far = orig.index(19, 19, 5);
    CHECK(r.channel(0)[far] == 1.0f);
    CHECK(r.channel(1)[far] == 0.0f);
    CHECK(r.channel(2)[orig.index(w.start[0] + 1, w.start[1] + 2, w.start[2])] ==
          p.channel(2)[Geometry(w.size, {1, 1, 1}).index(1 + w.pad_before[0], 2 + w.pad_before[1], w.pad_before[2])]);
  }
}

TEST_CASE("crop then restore is exact inside the window") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<long> ext(1, 24);
  for (int t = 0; t < 40; ++t) {
    const Index3 s{ext(rng), ext(rng), ext(rng)};
    const auto l = oracle::random_labels(s, 5, rng, ClassScheme::fine());
    std::uniform_real_distribution<double> c(-3.0, 27.0);
    const auto w = plan_window(s, {c(rng), c(rng), c(rng)}, {12, 10, 8});
    const auto back = restore_to_original(crop(l, w), w, l.geometry());
    for (long z = 0; z < s[2]; ++z)
      for (long y = 0; y < s[1]; ++y)
        for (long x = 0; x < s[0]; ++x) {
          const bool in = x >= w.start[0] && x < w.start[0] + w.size[0] - w.pad_before[0] - w.pad_after[0] &&
                          y >= w.start[1] && y < w.start[1] + w.size[1] - w.pad_before[1] - w.pad_after[1] &&
                          z >= w.start[2] && z < w.start[2] + w.size[2] - w.pad_before[2] - w.pad_after[2];
          CHECK(back.at(x, y, z) == (in ? l.at(x, y, z) : 0));
        }
  }
}

TEST_CASE("coarse_target") {
  std::mt19937_64 rng(8);
  const auto l = oracle::random_labels({8, 8, 4}, 5, rng, ClassScheme::fine());
  const auto c = coarse_target(l);
  CHECK(c.scheme() == ClassScheme::coarse());
  CHECK(c.count(1) == l.count(1) + l.count(2) + l.count(3) + l.count(4));
  const auto single = coarse_target(with_voxels({4, 4, 4}, {{{1, 2, 3}, 1}}));
  CHECK(single.count(1) == 1);
  CHECK(single.at(1, 2, 3) == 1);
  CHECK(coarse_target(LabelMap::background(Geometry({3, 3, 3}, {1, 1, 1}), ClassScheme::fine())).count(1) == 0);
  CHECK_THROWS(coarse_target(c));
}

TEST_CASE("window sidecar round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "tassnet_test_sidecar";
  std::filesystem::create_directories(dir);
  const auto w = plan_window({200, 300, 44}, {20.4, 150.6, 21.5}, {256, 256, 44});
  CenterOfMass com{{20.4, 150.6, 21.5}, 12, false};
  write_window_sidecar(w, com, dir / "w.txt");
  CHECK(read_window_sidecar(dir / "w.txt") == w);
}
