#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "tassnet/checkpoint.hpp"
#include "tassnet/config_io.hpp"
#include "tassnet/experiment.hpp"
#include "tassnet/folds.hpp"
#include "tassnet/phantom.hpp"

using namespace tassnet;
namespace fs = std::filesystem;

namespace {

PatientScans cohort(int patients, std::mt19937_64& rng, int max_scans = 4) {
  PatientScans p;
  std::uniform_int_distribution<int> n(1, max_scans);
  for (int i = 0; i < patients; ++i) {
    const std::string id = "p" + std::to_string(i);
    const int k = n(rng);
    for (int s = 0; s < k; ++s) p[id].push_back(id + "_s" + std::to_string(s));
  }
  return p;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("tassnet_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool no_leakage(const FoldSplit& s) {
  std::set<std::string> hold(s.holdout.begin(), s.holdout.end());
  for (int f = 0; f < s.k(); ++f) {
    const auto v = s.validation_patients(f), t = s.train_patients(f);
    std::set<std::string> vs(v.begin(), v.end());
    for (const auto& p : t)
      if (vs.count(p) || hold.count(p)) return false;
    for (const auto& p : v)
      if (hold.count(p)) return false;
    std::set<std::string> vscans;
    for (const auto& sc : s.scans_of(v)) vscans.insert(sc);
    for (const auto& sc : s.scans_of(t))
      if (vscans.count(sc)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("make_folds sizes, grouping and determinism") {
  std::mt19937_64 rng(1);
  const auto p41 = cohort(41, rng);
  const auto s = make_folds(p41, 5, 7);
  std::multiset<std::size_t> sizes;
  for (const auto& f : s.folds) sizes.insert(f.size());
  CHECK(sizes == std::multiset<std::size_t>{9, 8, 8, 8, 8});
  CHECK(s == make_folds(p41, 5, 7));
  CHECK_FALSE(s == make_folds(p41, 5, 8));

  PatientScans three{{"a", {"a1", "a2", "a3"}}, {"b", {"b1"}}, {"c", {"c1"}}};
  const auto t = make_folds(three, 3, 0);
  int holding_a = 0;
  for (int f = 0; f < 3; ++f) {
    const auto sc = t.scans_of(t.validation_patients(f));
    const auto n = std::count_if(sc.begin(), sc.end(), [](const std::string& x) { return x[0] == 'a'; });
    CHECK((n == 0 || n == 3));
    holding_a += n == 3;
  }
  CHECK(holding_a == 1);

  CHECK_THROWS_AS(make_folds(three, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(three, 2, 0, 2), std::invalid_argument);
  const auto h = make_folds(p41, 5, 3, 8);
  CHECK(h.holdout.size() == 8);
  std::size_t total = 0;
  for (const auto& f : h.folds) total += f.size();
  CHECK(total == 33);
}

TEST_CASE("random splits never leak patients") {
  std::mt19937_64 rng(2);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = std::uniform_int_distribution<int>(2, 30)(rng);
    const auto p = cohort(n, rng, 5);
    const int k = std::uniform_int_distribution<int>(1, std::min(n, 6))(rng);
    const int hold = std::uniform_int_distribution<int>(0, n - k)(rng);
    const auto s = make_folds(p, k, rng(), hold);
    s.validate();
    violations += !no_leakage(s);
  }
  CHECK(violations == 0);
}

TEST_CASE("FoldSplit persistence and validation") {
  std::mt19937_64 rng(3);
  const auto s = make_folds(cohort(12, rng), 3, 5, 2);
  const auto dir = scratch("split");
  save_fold_split(s, dir / "split.json");
  CHECK(load_fold_split(dir / "split.json") == s);
  FoldSplit bad = s;
  bad.folds[1].push_back(bad.folds[0][0]);
  CHECK_THROWS_AS(bad.validate(), std::logic_error);
  fs::remove_all(dir);
}

TEST_CASE("phantom construction properties") {
  const PhantomSpec spec;
  const auto [im, lb] = generate_phantom(spec);
  for (int k = 1; k <= 4; ++k) CHECK(lb.count(k) > 0);
  CHECK(lb.shape() == spec.shape);

  SUBCASE("every wall voxel touches cavity or background") {
    const auto& s = lb.shape();
    for (std::int64_t z = 0; z < s[2]; ++z)
      for (std::int64_t y = 0; y < s[1]; ++y)
        for (std::int64_t x = 0; x < s[0]; ++x) {
          const auto l = lb.at(x, y, z);
          if (l != fine_class::la_wall && l != fine_class::ra_wall) continue;
          bool ok = false;
          const std::int64_t n[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
          for (const auto& d : n) {
            const std::int64_t a = x + d[0], b = y + d[1], c = z + d[2];
            if (a < 0 || b < 0 || c < 0 || a >= s[0] || b >= s[1] || c >= s[2]) { ok = true; continue; }
            const auto m = lb.at(a, b, c);
            ok = ok || m == 0 || m == fine_class::la_cavity || m == fine_class::ra_cavity;
          }
          REQUIRE(ok);
        }
  }
  SUBCASE("wall count grows with wall thickness") {
    PhantomSpec thick = spec;
    thick.la.wall = thick.ra.wall = 4.0;
    const auto [im2, lb2] = generate_phantom(thick);
    CHECK(lb2.count(fine_class::la_wall) > lb.count(fine_class::la_wall));
    CHECK(lb2.count(fine_class::ra_wall) > lb.count(fine_class::ra_wall));
  }
  SUBCASE("zero noise renders three intensities") {
    PhantomSpec clean = spec;
    clean.noise_sigma = 0.0;
    const auto [im0, lb0] = generate_phantom(clean);
    for (std::size_t i = 0; i < lb0.labels().size(); ++i) {
      const auto l = lb0.labels()[i];
      const float want = l == 0 ? 0.0f : (l == fine_class::la_wall || l == fine_class::ra_wall) ? 1.0f : 0.5f;
      REQUIRE(im0.data()[i] == want);
    }
  }
  SUBCASE("deterministic per seed") {
    const auto [a, b] = generate_phantom(spec);
    CHECK(std::equal(a.data().begin(), a.data().end(), im.data().begin()));
    PhantomSpec other = spec;
    other.seed = 99;
    const auto [c, d] = generate_phantom(other);
    CHECK_FALSE(std::equal(c.data().begin(), c.data().end(), im.data().begin()));
    CHECK(std::equal(d.labels().begin(), d.labels().end(), lb.labels().begin()));
  }
  SUBCASE("invalid specifications") {
    PhantomSpec overlap = spec;
    overlap.ra.center = overlap.la.center;
    CHECK_THROWS_AS(generate_phantom(overlap), std::invalid_argument);
    PhantomSpec thin = spec;
    thin.la.wall = 2.0;  // thinner than the 2.5 mm slice spacing
    CHECK_THROWS_AS(generate_phantom(thin), std::invalid_argument);
  }
  SUBCASE("variants stay valid") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto v = vary_phantom(spec, s);
      CHECK_NOTHROW(generate_phantom(v));
    }
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  NetworkConfig cfg;
  cfg.dims = 2;
  cfg.stage_features = {4, 8, 8, 8, 8, 8, 8};
  cfg.cardinality = 2;
  cfg.input_shape = {64, 64, 1};
  Network net(cfg, 11);
  const auto dir = scratch("ckpt");
  const auto path = dir / "m.ckpt";
  save_checkpoint(net, ClassScheme::fine(), path, {{"fold", 1}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.network.config() == cfg);
  CHECK(ck.scheme == ClassScheme::fine());
  CHECK(ck.meta.at("fold") == 1);
  const auto a = net.parameters();
  const auto b = ck.network.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& s) {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << s;
  };
  write(bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  write(bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  std::string magic = bytes;
  magic[0] = 'X';
  write(magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  std::string version = bytes;
  version[8] = 9;
  write(version);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"), doctest::Contains("version"), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("run configuration") {
  const auto dir = scratch("runcfg");
  RunConfig c = RunConfig::tiny();
  c.dataset = "/data";
  c.output = "/out";
  save_run_config(c, dir / "a.json");
  const auto back = load_run_config(dir / "a.json");
  CHECK(nlohmann::json(back) == nlohmann::json(c));

  std::ofstream(dir / "b.json") << R"({"preset": "tiny", "dataset": "ds", "output": "out", "folds": 3,
                                      "fine_3d": {"train": {"epochs": 9}}})";
  const auto p = load_run_config(dir / "b.json");
  CHECK(p.folds == 3);
  CHECK(p.fine_3d.train.epochs == 9);
  CHECK(p.fine_3d.train.iterations_per_epoch == RunConfig::tiny().fine_3d.train.iterations_per_epoch);
  CHECK(p.fine_3d.network == RunConfig::tiny().fine_3d.network);
  CHECK(p.dataset == dir / "ds");
  std::ofstream(dir / "c.json") << R"({"preset": "huge"})";
  CHECK_THROWS(load_run_config(dir / "c.json"));

  const auto s = RunConfig::standard();
  CHECK(s.folds == 5);
  CHECK(s.fine_3d.train.epochs == 1000);
  CHECK(s.coarse.train.epochs == 250);
  CHECK(s.patch_size() == Index3{256, 256, 44});
  CHECK(s.fine_3d.schedule.cycles == 4);
  CHECK(parse_role(role_name(Role::Fine2D)) == Role::Fine2D);
  CHECK_THROWS(parse_role("medium"));
  fs::remove_all(dir);
}

TEST_CASE("sha256 and manifest") {
  const auto dir = scratch("manifest");
  std::ofstream(dir / "abc.txt") << "abc";
  fs::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "empty.txt");
  CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_manifest(dir);
  const auto m = read_json_file(dir / "manifest.json");
  std::map<std::string, std::string> files;
  for (const auto& e : m.at("files")) files[e.at("path").get<std::string>()] = e.at("sha256").get<std::string>();
  CHECK(files.size() == 2);
  CHECK(files.at("abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(files.at("sub/empty.txt") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  fs::remove_all(dir);
}

TEST_CASE("micro experiment: completes, resumes and is deterministic") {
  const auto dir = scratch("micro");
  PhantomSpec base;
  base.shape = {64, 64, 16};
  base.la = {{55.0, 40.0, 20.0}, {12.0, 14.0, 10.0}, 2.5};
  base.ra = {{22.0, 40.0, 20.0}, {10.0, 12.0, 9.0}, 2.5};
  write_phantom_dataset(dir / "data", 4, 1, base, 3);

  RunConfig c = RunConfig::tiny();
  c.dataset = dir / "data";
  c.output = dir / "out";
  c.coarse.network.input_shape = {64, 64, 16};
  for (StageConfig* s : {&c.coarse, &c.fine_2d, &c.fine_3d}) {
    s->train.epochs = 2;
    s->train.iterations_per_epoch = 1;
    s->train.early_stop_patience = 1;
    s->train.batch_size = 1;
    s->schedule.total_epochs = 2;
    s->schedule.cycles = 1;
  }
  const auto r = run_experiment(c);
  CHECK(r.cross_validation.rows.size() == 4);
  CHECK(r.cross_validation.cases.size() == 4);
  CHECK(fs::exists(c.output / "manifest.json"));
  CHECK(fs::exists(c.output / "report.csv"));
  CHECK(fs::exists(checkpoint_path(c, 1, Role::Fine3D)));

  // a rerun skips finished stages and leaves checkpoints untouched
  const auto stamp = fs::last_write_time(checkpoint_path(c, 0, Role::Coarse));
  run_experiment(c);
  CHECK(fs::last_write_time(checkpoint_path(c, 0, Role::Coarse)) == stamp);

  // a fresh output directory reproduces the split and the LR columns
  RunConfig c2 = c;
  c2.output = dir / "out2";
  run_experiment(c2);
  CHECK(load_fold_split(c.output / "split.json") == load_fold_split(c2.output / "split.json"));
  for (Role role : {Role::Coarse, Role::Fine2D, Role::Fine3D}) {
    const auto a = TrainingLog::read_jsonl(stage_dir(c, 0, role) / "training_log.jsonl");
    const auto b = TrainingLog::read_jsonl(stage_dir(c2, 0, role) / "training_log.jsonl");
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) CHECK(a.epochs[i].lr == b.epochs[i].lr);
  }

  // inference with a missing checkpoint names the stage
  CaseStore store(c.dataset);
  CHECK_THROWS_WITH(infer_and_evaluate(c, {dir / "nope.ckpt"}, {checkpoint_path(c, 0, Role::Fine2D)},
                                       {checkpoint_path(c, 0, Role::Fine3D)}, {"patient000_scan0"}, dir / "inf", store),
                    doctest::Contains("coarse"));
  fs::remove_all(dir);
}
