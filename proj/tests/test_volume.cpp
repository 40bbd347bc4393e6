#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "tassnet/nifti_io.hpp"
#include "tassnet/volume.hpp"

using namespace tassnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tassnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Volume ramp(const Index3& s, const Spacing& sp) {
  std::vector<float> d(static_cast<std::size_t>(s[0] * s[1] * s[2]));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(i) * 0.37f - 11.0f;
  return Volume(Geometry(s, sp), std::move(d));
}

}  // namespace

TEST_CASE("class schemes") {
  const auto fine = ClassScheme::fine();
  CHECK(fine.size() == 5);
  CHECK(fine.name(0) == "background");
  CHECK(fine.name(fine_class::la_wall) == "LA wall");
  CHECK(fine.name(fine_class::ra_wall) == "RA wall");
  CHECK(fine.name(fine_class::la_cavity) == "LA cavity");
  CHECK(fine.name(fine_class::ra_cavity) == "RA cavity");
  CHECK(ClassScheme::coarse().size() == 2);
  CHECK_THROWS(ClassScheme({{0, "background"}, {2, "gap"}}));
  CHECK_THROWS(ClassScheme({{0, "background"}, {1, "x"}, {2, "x"}}));
  CHECK_THROWS(ClassScheme({{0, "tissue"}, {1, "x"}}));
}

TEST_CASE("geometry validation") {
  CHECK_THROWS(Geometry({0, 1, 1}, {1, 1, 1}).validate());
  CHECK_THROWS(Volume(Geometry({2, 2, 2}, {1, 0, 1}), std::vector<float>(8)));
  CHECK_THROWS(Volume(Geometry({2, 2, 2}, {1, 1, 1}), std::vector<float>(7)));
}

TEST_CASE("label map rejects out-of-scheme values and names the voxel") {
  std::vector<std::uint8_t> l(8, 0);
  l[Geometry({2, 2, 2}, {1, 1, 1}).index(1, 0, 1)] = 7;
  try {
    LabelMap(Geometry({2, 2, 2}, {1, 1, 1}), l, ClassScheme::fine());
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1, 0, 1)") != std::string::npos);
    CHECK(msg.find("7") != std::string::npos);
  }
}

TEST_CASE("normalize_intensity") {
  SUBCASE("constant volume maps to zeros") {
    const Volume v(Geometry({3, 3, 3}, {1, 1, 1}), std::vector<float>(27, 7.0f));
    const auto n = normalize_intensity(v);
    for (float x : n.data()) CHECK(x == 0.0f);
  }
  SUBCASE("two voxels {0, 2} map to {-1, +1}") {
    const Volume v(Geometry({2, 1, 1}, {1, 1, 1}), {0.0f, 2.0f});
    const auto n = normalize_intensity(v);
    CHECK(n.data()[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(n.data()[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero mean, unit variance, idempotent") {
    std::mt19937_64 rng(3);
    std::normal_distribution<float> g(40.0f, 9.0f);
    std::vector<float> d(5000);
    for (auto& x : d) x = g(rng);
    const auto n = normalize_intensity(Volume(Geometry({50, 10, 10}, {1, 1, 1}), d));
    double mean = 0.0, var = 0.0;
    for (float x : n.data()) mean += x;
    mean /= 5000.0;
    for (float x : n.data()) var += (x - mean) * (x - mean);
    var /= 5000.0;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-5);
    const auto twice = normalize_intensity(n);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(twice.data()[i] - n.data()[i]) <= 1e-6);
  }
}

TEST_CASE("one_hot and argmax") {
  std::mt19937_64 rng(11);
  const auto l = oracle::random_labels({6, 5, 4}, 5, rng, ClassScheme::fine());
  const auto p = one_hot(l);
  const std::size_t n = l.geometry().voxel_count();
  for (std::size_t v = 0; v < n; ++v) {
    float sum = 0.0f;
    for (int k = 0; k < 5; ++k) sum += p.channel(k)[v];
    CHECK(sum == 1.0f);
  }
  const auto back = argmax(p);
  CHECK(std::equal(back.labels().begin(), back.labels().end(), l.labels().begin()));

  SUBCASE("all background") {
    const auto bg = one_hot(LabelMap::background(Geometry({3, 3, 3}, {1, 1, 1}), ClassScheme::fine()));
    for (float x : bg.channel(0)) CHECK(x == 1.0f);
    for (int k = 1; k < 5; ++k)
      for (float x : bg.channel(k)) CHECK(x == 0.0f);
  }
  SUBCASE("ties go to the lowest id") {
    const ProbabilityMap tie(Geometry({1, 1, 1}, {1, 1, 1}), ClassScheme::fine(), {0.0f, 0.5f, 0.0f, 0.5f, 0.0f});
    CHECK(argmax(tie).labels()[0] == 1);
  }
}

TEST_CASE("probability map validation") {
  const Geometry g({1, 1, 1}, {1, 1, 1});
  CHECK_THROWS(ProbabilityMap(g, ClassScheme::coarse(), {0.7f, 0.7f}));
  CHECK_THROWS(ProbabilityMap(g, ClassScheme::coarse(), {1.5f, -0.5f}));
  CHECK_NOTHROW(ProbabilityMap(g, ClassScheme::coarse(), {0.25f, 0.75f}));
}

TEST_CASE("NIfTI volume round trip") {
  const fs::path dir = temp_dir("nifti");
  const Volume v = ramp({7, 5, 3}, {0.625, 0.625, 2.5});
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    save_volume(v, dir / name);
    const Volume r = load_volume(dir / name);
    CHECK(r.shape() == v.shape());
    for (int a = 0; a < 3; ++a) CHECK(std::abs(r.spacing()[a] - v.spacing()[a]) <= 1e-6);
    CHECK(std::equal(r.data().begin(), r.data().end(), v.data().begin()));
    CHECK(r.geometry().affine == v.geometry().affine);
  }
}

TEST_CASE("NIfTI label round trip") {
  const fs::path dir = temp_dir("nifti_labels");
  std::mt19937_64 rng(5);
  const auto base = oracle::random_labels({9, 8, 4}, 5, rng, ClassScheme::fine());
  const LabelMap l(Geometry({9, 8, 4}, {1.25, 1.25, 2.5}), std::vector<std::uint8_t>(base.labels().begin(), base.labels().end()),
                   ClassScheme::fine());
  save_label_map(l, dir / "l.nii.gz");
  const auto r = load_label_map(dir / "l.nii.gz", ClassScheme::fine());
  CHECK(std::equal(r.labels().begin(), r.labels().end(), l.labels().begin()));
  CHECK(r.spacing() == l.spacing());
  // labels outside a smaller scheme are rejected on load
  CHECK_THROWS(load_label_map(dir / "l.nii.gz", ClassScheme::coarse()));
}

TEST_CASE("NIfTI errors") {
  const fs::path dir = temp_dir("nifti_errors");
  CHECK_THROWS(load_volume(dir / "missing.nii"));
  CHECK_THROWS(save_volume(ramp({2, 2, 2}, {1, 1, 1}), dir / "no_such_dir" / "x.nii"));

  SUBCASE("2D image") {
    // a 2D file: patch dim[0] of a valid file down to 2
    save_volume(ramp({4, 4, 1}, {1, 1, 1}), dir / "flat.nii");
    std::fstream f(dir / "flat.nii", std::ios::in | std::ios::out | std::ios::binary);
    const std::int16_t two = 2;
    f.seekp(40);
    f.write(reinterpret_cast<const char*>(&two), 2);
    f.close();
    try {
      load_volume(dir / "flat.nii");
      FAIL("expected an exception");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("expected 3D volume") != std::string::npos);
    }
  }
  SUBCASE("non-positive spacing") {
    save_volume(ramp({2, 2, 2}, {1, 1, 1}), dir / "bad.nii");
    std::fstream f(dir / "bad.nii", std::ios::in | std::ios::out | std::ios::binary);
    const float zero = 0.0f;
    f.seekp(80);  // pixdim[1]
    f.write(reinterpret_cast<const char*>(&zero), 4);
    f.close();
    CHECK_THROWS(load_volume(dir / "bad.nii"));
  }
}

TEST_CASE("probability channels are written per class") {
  const fs::path dir = temp_dir("nifti_probs");
  std::mt19937_64 rng(1);
  const auto p = oracle::random_probs({4, 3, 2}, ClassScheme::fine(), rng);
  const auto files = save_probability_channels(p, dir, "case");
  REQUIRE(files.size() == 5);
  const auto c3 = load_volume(dir / "case_class3.nii.gz");
  CHECK(std::equal(c3.data().begin(), c3.data().end(), p.channel(3).begin()));
}
