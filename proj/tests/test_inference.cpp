#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tassnet/checkpoint.hpp"
#include "tassnet/inference.hpp"
#include "tassnet/phantom.hpp"

using namespace tassnet;

namespace {

NetworkConfig net_config(int dims, int classes, Index3 input) {
  NetworkConfig c;
  c.dims = dims;
  c.num_classes = classes;
  c.stage_features = {4, 8, 8, 8, 8, 8, 8};
  c.cardinality = 2;
  c.input_shape = input;
  return c;
}

Volume random_volume(Index3 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  std::vector<float> d(static_cast<std::size_t>(s[0] * s[1] * s[2]));
  for (auto& x : d) x = g(rng);
  return Volume(Geometry(s, {1.25, 1.25, 2.5}), std::move(d));
}

void check_valid(const ProbabilityMap& p) {
  const std::size_t n = p.geometry().voxel_count();
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int k = 0; k < p.num_classes(); ++k) {
      REQUIRE(std::isfinite(p.channel(k)[v]));
      s += p.channel(k)[v];
    }
    REQUIRE(std::abs(s - 1.0) <= 1e-5);
  }
}

std::vector<float> slice(const ProbabilityMap& p, int k, std::int64_t z) {
  const auto& s = p.shape();
  const std::size_t plane = static_cast<std::size_t>(s[0] * s[1]);
  const auto c = p.channel(k).subspan(static_cast<std::size_t>(z) * plane, plane);
  return {c.begin(), c.end()};
}

PipelineModels models(Index3 patch) {
  PipelineModels m;
  m.coarse.push_back({Network(net_config(3, 2, {64, 64, 16}), 1), ClassScheme::coarse(), {}});
  m.fine_2d.push_back({Network(net_config(2, 5, {patch[0], patch[1], 1}), 2), ClassScheme::fine(), {}});
  m.fine_3d.push_back({Network(net_config(3, 5, patch), 3), ClassScheme::fine(), {}});
  return m;
}

}  // namespace

TEST_CASE("predict_3d") {
  Network net(net_config(3, 5, {64, 64, 8}), 7);
  const Volume roi = random_volume({64, 64, 8}, 1);
  const auto p = predict_3d(net, roi, ClassScheme::fine());
  CHECK(p.shape() == roi.shape());
  check_valid(p);
  const auto q = predict_3d(net, roi, ClassScheme::fine());
  CHECK(std::equal(p.probs().begin(), p.probs().end(), q.probs().begin()));
  const Volume zeros(roi.geometry(), std::vector<float>(roi.data().size(), 0.0f));
  check_valid(predict_3d(net, zeros, ClassScheme::fine()));
  CHECK_THROWS_AS(predict_3d(net, random_volume({64, 64, 10}, 1), ClassScheme::fine()), std::invalid_argument);
  CHECK_THROWS_AS(predict_3d(net, roi, ClassScheme::coarse()), std::invalid_argument);
}

TEST_CASE("predict_2d slice independence and stacking order") {
  Network net(net_config(2, 5, {64, 64, 1}), 7);
  const Index3 s{64, 64, 5};
  const Volume roi = random_volume(s, 2);
  const auto p = predict_2d(net, roi, ClassScheme::fine(), 2);
  check_valid(p);
  CHECK(p.shape() == s);
  CHECK(std::equal(p.probs().begin(), p.probs().end(), predict_2d(net, roi, ClassScheme::fine(), 8).probs().begin()));

  // swap slices 1 and 3
  const std::size_t plane = 64 * 64;
  std::vector<float> d(roi.data().begin(), roi.data().end());
  std::swap_ranges(d.begin() + plane, d.begin() + 2 * plane, d.begin() + 3 * plane);
  const auto q = predict_2d(net, Volume(roi.geometry(), d), ClassScheme::fine());
  for (int k = 0; k < 5; ++k) {
    CHECK(slice(q, k, 1) == slice(p, k, 3));
    CHECK(slice(q, k, 3) == slice(p, k, 1));
    CHECK(slice(q, k, 0) == slice(p, k, 0));
  }

  // a marker in slice 2 changes output slice 2 only
  std::vector<float> m(roi.data().begin(), roi.data().end());
  for (std::size_t i = 2 * plane; i < 3 * plane; i += 3) m[i] = 25.0f;
  const auto r = predict_2d(net, Volume(roi.geometry(), m), ClassScheme::fine());
  for (std::int64_t z = 0; z < 5; ++z) {
    bool same = true;
    for (int k = 0; k < 5; ++k) same = same && slice(r, k, z) == slice(p, k, z);
    CHECK(same == (z != 2));
  }
  CHECK_THROWS_AS(predict_2d(net, random_volume({48, 64, 5}, 1), ClassScheme::fine()), std::invalid_argument);
}

TEST_CASE("ensemble") {
  std::mt19937_64 rng(5);
  const auto scheme = ClassScheme::fine();
  const Index3 s{5, 4, 3};
  const auto a = oracle::random_probs(s, scheme, rng);
  const auto b = oracle::random_probs(s, scheme, rng);
  const auto c = oracle::random_probs(s, scheme, rng);

  const auto aa = ensemble({a, a});
  CHECK(std::equal(aa.probs().begin(), aa.probs().end(), a.probs().begin()));
  const auto w10 = ensemble({a, b}, {1.0, 0.0});
  CHECK(std::equal(w10.probs().begin(), w10.probs().end(), a.probs().begin()));
  const auto single = argmax(ensemble({a})), direct = argmax(a);
  CHECK(std::equal(single.labels().begin(), single.labels().end(), direct.labels().begin(), direct.labels().end()));

  const auto abc = ensemble({a, b, c}), cab = ensemble({c, a, b});
  for (std::size_t i = 0; i < abc.probs().size(); ++i) REQUIRE(abc.probs()[i] == doctest::Approx(cab.probs()[i]).epsilon(1e-6));
  check_valid(abc);

  // disagreeing one-hot maps
  const Geometry g({2, 1, 1}, {1, 1, 1});
  const LabelMap la(g, {1, 3}, scheme), lb(g, {2, 3}, scheme);
  const auto e = ensemble({one_hot(la), one_hot(lb)});
  CHECK(e.channel(1)[0] == 0.5f);
  CHECK(e.channel(2)[0] == 0.5f);
  CHECK(e.channel(3)[1] == 1.0f);
  CHECK(argmax(e).at(0, 0, 0) == 1);  // ties go to the lowest id

  CHECK_THROWS_AS(ensemble({}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble({a, b}, {0.7, 0.7}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble({a, b}, {1.5, -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble({a, oracle::random_probs({5, 4, 2}, scheme, rng)}), std::invalid_argument);
  CHECK_THROWS_AS(ensemble({a, oracle::random_probs(s, ClassScheme::coarse(), rng)}), std::invalid_argument);
}

TEST_CASE("coarse downsampling helpers") {
  CHECK(coarse_downsample_factor({96, 96, 24}, 0) == 1);
  CHECK(coarse_downsample_factor({96, 96, 24}, 96 * 96 * 24) == 1);
  CHECK(coarse_downsample_factor({96, 96, 24}, 96 * 96 * 24 - 1) == 2);
  CHECK(coarse_downsample_factor({576, 576, 44}, 144 * 144 * 44) == 4);
  const Volume v(Geometry({3, 2, 1}, {1, 1, 2}), {1, 2, 3, 4, 5, 6});
  const auto d = downsample_xy(v, 2);
  CHECK(d.shape() == Index3{2, 1, 1});
  CHECK(d.spacing() == Spacing{2, 2, 2});
  CHECK(d.data()[0] == doctest::Approx(3.0));
  CHECK(d.data()[1] == doctest::Approx(4.5));
  const LabelMap l(Geometry({3, 2, 1}, {1, 1, 2}), {0, 0, 1, 0, 0, 0}, ClassScheme::coarse());
  const auto dl = downsample_xy(l, 2);
  CHECK(dl.at(0, 0, 0) == 0);
  CHECK(dl.at(1, 0, 0) == 1);
}

TEST_CASE("full_pipeline contract") {
  auto m = models({64, 64, 16});
  PhantomSpec spec;
  spec.shape = {80, 72, 20};
  spec.la = {{65.0, 45.0, 25.0}, {12.0, 14.0, 10.0}, 2.5};
  spec.ra = {{30.0, 45.0, 25.0}, {10.0, 12.0, 9.0}, 2.5};
  const auto [image, gt] = generate_phantom(spec);
  const auto r = full_pipeline(m, image);
  CHECK(r.labels.shape() == image.shape());
  CHECK(r.probabilities.shape() == image.shape());
  CHECK(r.labels.scheme() == ClassScheme::fine());
  CHECK(r.window.original_shape == image.shape());
  CHECK(r.window.size == Index3{64, 64, 16});
  for (auto l : r.labels.labels()) REQUIRE(l < 5);
  const auto& s = image.shape();
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        const Index3 p{x, y, z};
        bool in = true;
        for (int a = 0; a < 3; ++a)
          in = in && p[a] >= r.window.start[a] &&
               p[a] < r.window.start[a] + r.window.size[a] - r.window.pad_before[a] - r.window.pad_after[a];
        if (!in) REQUIRE(r.labels.at(x, y, z) == 0);
      }
  std::vector<std::string> stages;
  for (const auto& t : r.timings) stages.push_back(t.stage);
  CHECK(stages == std::vector<std::string>{"validate", "normalize", "coarse", "extract", "fine_2d", "fine_3d", "ensemble"});
  CHECK(r.total_seconds() >= 0.0);

  // a volume too small for the coarse network names the stage that failed
  const Volume tiny(Geometry({40, 40, 4}, {1.25, 1.25, 2.5}), std::vector<float>(6400, 1.0f));
  try {
    full_pipeline(m, tiny);
    FAIL("expected a failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("stage 'coarse'") != std::string::npos);
  }
  auto broken = models({64, 64, 16});
  broken.fine_2d.clear();
  CHECK_THROWS_WITH_AS(full_pipeline(broken, image), doctest::Contains("stage 'validate'"), std::runtime_error);
}
