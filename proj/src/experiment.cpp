#include "tassnet/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "tassnet/checkpoint.hpp"
#include "tassnet/config_io.hpp"
#include "tassnet/inference.hpp"
#include "tassnet/nifti_io.hpp"
#include "tassnet/phantom.hpp"
#include "tassnet/roi.hpp"

namespace fs = std::filesystem;

namespace tassnet {

RunConfig RunConfig::standard() {
  RunConfig c;
  c.coarse = {NetworkConfig::coarse_3d(), TrainConfig::coarse(), {}};
  // 250 epochs do not split into four equal cycles; one 250-epoch cycle matches the fine
  // stage's cycle length.
  c.coarse.schedule.total_epochs = 250;
  c.coarse.schedule.cycles = 1;
  c.fine_2d = {NetworkConfig::fine_2d(), TrainConfig::fine(), {}};
  c.fine_3d = {NetworkConfig::fine_3d(), TrainConfig::fine(), {}};
  return c;
}

RunConfig RunConfig::tiny() {
  RunConfig c;
  c.folds = 2;
  const std::vector<int> widths{8, 16, 32, 32, 32, 32, 32};

  NetworkConfig coarse = NetworkConfig::coarse_3d();
  coarse.stage_features = {4, 8, 8, 8, 8, 8, 8};
  coarse.cardinality = 2;
  coarse.input_shape = {96, 96, 24};
  NetworkConfig f3 = NetworkConfig::fine_3d();
  f3.stage_features = widths;
  f3.cardinality = 4;
  f3.input_shape = {64, 64, 16};
  NetworkConfig f2 = NetworkConfig::fine_2d();
  f2.stage_features = widths;
  f2.cardinality = 4;
  f2.input_shape = {64, 64, 1};

  auto train = [](int epochs, int iters, int batch, int patience) {
    TrainConfig t;
    t.epochs = epochs;
    t.iterations_per_epoch = iters;
    t.batch_size = batch;
    t.early_stop_patience = patience;
    return t;
  };
  auto schedule = [](int epochs, int cycles) {
    LRScheduleConfig s;
    s.total_epochs = epochs;
    s.cycles = cycles;
    s.lr_max = 0.01;
    s.lr_min = 0.001;
    return s;
  };
  c.coarse = {coarse, train(4, 15, 2, 3), schedule(4, 1)};
  c.fine_2d = {f2, train(8, 25, 8, 7), schedule(8, 2)};
  c.fine_3d = {f3, train(8, 25, 2, 7), schedule(8, 2)};
  return c;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw std::invalid_argument("run config needs a dataset directory");
  if (output.empty()) throw std::invalid_argument("run config needs an output directory");
  if (folds < 1) throw std::invalid_argument("fold count must be positive");
  if (holdout_patients < 0) throw std::invalid_argument("holdout size must be non-negative");
  for (int f : run_folds)
    if (f < 0 || f >= folds) throw std::invalid_argument("run_folds lists fold " + std::to_string(f));
  const std::pair<const StageConfig*, const char*> stages[] = {
      {&coarse, "coarse"}, {&fine_2d, "fine_2d"}, {&fine_3d, "fine_3d"}};
  for (const auto& [s, name] : stages) {
    try {
      s->network.validate();
      s->train.validate();
      s->schedule.validate();
      if (s->schedule.total_epochs != s->train.epochs)
        throw std::invalid_argument("schedule and training disagree on the epoch count");
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string(name) + ": " + e.what());
    }
  }
  if (coarse.network.dims != 3 || coarse.network.num_classes != 2)
    throw std::invalid_argument("coarse stage must be a two-class 3D network");
  if (fine_3d.network.dims != 3 || fine_3d.network.num_classes != 5)
    throw std::invalid_argument("fine_3d stage must be a five-class 3D network");
  if (fine_2d.network.dims != 2 || fine_2d.network.num_classes != 5)
    throw std::invalid_argument("fine_2d stage must be a five-class 2D network");
  const Index3 p = patch_size();
  if (fine_2d.network.input_shape[0] != p[0] || fine_2d.network.input_shape[1] != p[1])
    throw std::invalid_argument("fine_2d in-plane input must match the fine_3d patch");
}

void to_json(nlohmann::json& j, const StageConfig& s) {
  j = {{"network", s.network}, {"train", s.train}, {"schedule", s.schedule}};
}

void from_json(const nlohmann::json& j, StageConfig& s) {
  if (j.contains("network")) s.network = j.at("network").get<NetworkConfig>();
  if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
  if (j.contains("schedule")) s.schedule = j.at("schedule").get<LRScheduleConfig>();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"dataset", c.dataset.string()},
       {"output", c.output.string()},
       {"folds", c.folds},
       {"holdout_patients", c.holdout_patients},
       {"split_seed", c.split_seed},
       {"run_folds", c.run_folds},
       {"coarse_voxel_budget", c.coarse_voxel_budget},
       {"fold_ensemble", c.fold_ensemble},
       {"coarse", c.coarse},
       {"fine_2d", c.fine_2d},
       {"fine_3d", c.fine_3d}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  // a "preset" key picks the starting point; every other key overrides it
  const std::string preset = j.value("preset", std::string("standard"));
  if (preset == "tiny") c = RunConfig::tiny();
  else if (preset == "standard") c = RunConfig::standard();
  else throw std::invalid_argument("unknown preset '" + preset + "'");
  c.dataset = j.value("dataset", c.dataset.string());
  c.output = j.value("output", c.output.string());
  c.folds = j.value("folds", c.folds);
  c.holdout_patients = j.value("holdout_patients", c.holdout_patients);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.run_folds = j.value("run_folds", c.run_folds);
  c.coarse_voxel_budget = j.value("coarse_voxel_budget", c.coarse_voxel_budget);
  c.fold_ensemble = j.value("fold_ensemble", c.fold_ensemble);
  auto stage = [&](const char* key, StageConfig& s) {
    if (!j.contains(key)) return;
    nlohmann::json merged = s;
    merged.merge_patch(j.at(key));
    s = merged.get<StageConfig>();
  };
  stage("coarse", c.coarse);
  stage("fine_2d", c.fine_2d);
  stage("fine_3d", c.fine_3d);
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig c;
  try {
    c = read_json_file(path).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  // relative dataset/output paths are taken relative to the config file
  const fs::path base = path.parent_path();
  if (!c.dataset.empty() && c.dataset.is_relative()) c.dataset = base / c.dataset;
  if (!c.output.empty() && c.output.is_relative()) c.output = base / c.output;
  return c;
}

void save_run_config(const RunConfig& c, const fs::path& path) {
  write_json_file(nlohmann::json(c), path);
}

std::string role_name(Role r) {
  switch (r) {
    case Role::Coarse: return "coarse";
    case Role::Fine2D: return "fine_2d";
    case Role::Fine3D: return "fine_3d";
  }
  return "?";
}

Role parse_role(const std::string& name) {
  if (name == "coarse") return Role::Coarse;
  if (name == "fine_2d") return Role::Fine2D;
  if (name == "fine_3d") return Role::Fine3D;
  throw std::invalid_argument("unknown stage '" + name + "' (coarse, fine_2d, fine_3d)");
}

CaseStore::CaseStore(fs::path dataset) : root_(std::move(dataset)) {}

const Volume& CaseStore::raw_image(const std::string& scan) {
  auto it = raw_.find(scan);
  if (it == raw_.end()) it = raw_.emplace(scan, load_volume(root_ / "images" / (scan + ".nii.gz"))).first;
  return it->second;
}

const Volume& CaseStore::image(const std::string& scan) {
  auto it = normalized_.find(scan);
  if (it == normalized_.end()) it = normalized_.emplace(scan, normalize_intensity(raw_image(scan))).first;
  return it->second;
}

const LabelMap& CaseStore::labels(const std::string& scan) {
  auto it = labels_.find(scan);
  if (it == labels_.end())
    it = labels_.emplace(scan, load_label_map(root_ / "labels" / (scan + ".nii.gz"), ClassScheme::fine())).first;
  return it->second;
}

namespace {

const StageConfig& stage_of(const RunConfig& cfg, Role r) {
  return r == Role::Coarse ? cfg.coarse : r == Role::Fine2D ? cfg.fine_2d : cfg.fine_3d;
}

void touch(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error(p.string() + ": cannot write marker");
}

nlohmann::json metrics_json(const std::vector<CaseMetrics>& cases) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cases) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : c.rows) {
      nlohmann::json r = {{"class_id", m.class_id}, {"name", m.name}, {"dsc", m.dsc}};
      r["asd"] = m.asd ? nlohmann::json(*m.asd) : nlohmann::json(nullptr);
      r["hd95"] = m.hd95 ? nlohmann::json(*m.hd95) : nlohmann::json(nullptr);
      rows.push_back(r);
    }
    arr.push_back({{"case", c.case_id}, {"rows", rows}});
  }
  return arr;
}

std::vector<CaseMetrics> metrics_from_json(const nlohmann::json& arr) {
  std::vector<CaseMetrics> out;
  for (const auto& c : arr) {
    CaseMetrics cm{c.at("case").get<std::string>(), {}};
    for (const auto& r : c.at("rows")) {
      StructureMetrics m{r.at("class_id").get<int>(), r.at("name").get<std::string>(),
                         r.at("dsc").get<double>(), std::nullopt, std::nullopt};
      if (!r.at("asd").is_null()) m.asd = r.at("asd").get<double>();
      if (!r.at("hd95").is_null()) m.hd95 = r.at("hd95").get<double>();
      cm.rows.push_back(m);
    }
    out.push_back(std::move(cm));
  }
  return out;
}

void write_report(const MetricsReport& r, const fs::path& dir) {
  std::ofstream(dir / "report.txt") << r.format_table(true);
  r.write_csv(dir / "report.csv");
}

}  // namespace

std::vector<Case> prepare_cases(CaseStore& store, const std::vector<std::string>& scans, Role role,
                                const RunConfig& cfg) {
  std::vector<Case> out;
  for (const auto& scan : scans) {
    const Volume& image = store.image(scan);
    const LabelMap& labels = store.labels(scan);
    if (role == Role::Coarse) {
      const int f = coarse_downsample_factor(image.shape(), cfg.coarse_voxel_budget);
      out.push_back({scan, downsample_xy(image, f), downsample_xy(coarse_target(labels), f)});
    } else {
      const auto com = center_of_mass(labels, {fine_class::la_wall, fine_class::ra_wall,
                                               fine_class::la_cavity, fine_class::ra_cavity});
      const PatchWindow w = plan_window(image.shape(), com.position, cfg.patch_size());
      out.push_back({scan, crop(image, w), crop(labels, w)});
    }
  }
  return out;
}

fs::path fold_dir(const RunConfig& cfg, int fold) { return cfg.output / ("fold" + std::to_string(fold)); }
fs::path stage_dir(const RunConfig& cfg, int fold, Role role) { return fold_dir(cfg, fold) / role_name(role); }
fs::path checkpoint_path(const RunConfig& cfg, int fold, Role role) {
  return stage_dir(cfg, fold, role) / "model.ckpt";
}

void train_stage(const RunConfig& cfg, const FoldSplit& split, int fold, Role role,
                 CaseStore& store, bool force) {
  const fs::path dir = stage_dir(cfg, fold, role);
  if (!force && fs::exists(dir / "stage.done")) return;
  fs::create_directories(dir);
  fs::remove(dir / "stage.done");
  const StageConfig& st = stage_of(cfg, role);
  const auto r = static_cast<std::uint64_t>(role);
  const auto f = static_cast<std::uint64_t>(fold);

  SegmentationDataset data(prepare_cases(store, split.scans_of(split.train_patients(fold)), role, cfg),
                           prepare_cases(store, split.scans_of(split.validation_patients(fold)), role, cfg),
                           role == Role::Fine2D ? SampleMode::Slices : SampleMode::Volumetric);
  TrainConfig tc = st.train;
  tc.seed = derive_seed(st.train.seed, f, r, 1);
  Network net(st.network, derive_seed(st.train.seed, f, r, 0));
  TrainResult result = train(net, data, tc, st.schedule);

  result.log.write_jsonl(dir / "training_log.jsonl");
  const nlohmann::json meta = {{"fold", fold},
                               {"stage", role_name(role)},
                               {"best_epoch", result.log.best_epoch},
                               {"best_val_loss", result.log.best_val_loss},
                               {"stopped_early", result.log.stopped_early}};
  save_checkpoint(result.best, data.scheme(), dir / "model.ckpt", meta);
  touch(dir / "stage.done");
}

std::vector<CaseMetrics> infer_and_evaluate(const RunConfig& cfg, const std::vector<fs::path>& coarse,
                                            const std::vector<fs::path>& fine_2d,
                                            const std::vector<fs::path>& fine_3d,
                                            const std::vector<std::string>& scans,
                                            const fs::path& out_dir, CaseStore& store) {
  PipelineModels models{load_role("coarse", coarse), load_role("fine_2d", fine_2d),
                        load_role("fine_3d", fine_3d)};
  PipelineOptions opts;
  opts.coarse_voxel_budget = cfg.coarse_voxel_budget;
  fs::create_directories(out_dir / "predictions");
  std::ofstream timings(out_dir / "timings.jsonl");
  std::vector<CaseMetrics> out;
  for (const auto& scan : scans) {
    const PipelineResult r = full_pipeline(models, store.raw_image(scan), opts);
    save_label_map(r.labels, out_dir / "predictions" / (scan + ".nii.gz"));
    write_window_sidecar(r.window, r.center, out_dir / "predictions" / (scan + "_window.txt"));
    nlohmann::json t = {{"scan", scan}, {"total_seconds", r.total_seconds()}};
    for (const auto& s : r.timings) t[s.stage] = s.seconds;
    timings << t.dump() << '\n';
    out.push_back(evaluate_case(r.labels, store.labels(scan), scan));
  }
  return out;
}

ExperimentResult run_experiment(const RunConfig& cfg,
                                const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  fs::create_directories(cfg.output);
  const fs::path errors = cfg.output / "errors.log";
  auto stage = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      const std::string msg = where + ": " + e.what();
      std::ofstream(errors, std::ios::app) << msg << '\n';
      throw std::runtime_error(msg);
    }
  };

  ExperimentResult result;
  stage("split", [&] {
    save_run_config(cfg, cfg.output / "run_config.json");
    const FoldSplit fresh = make_folds(read_patients(cfg.dataset), cfg.folds, cfg.split_seed,
                                       cfg.holdout_patients);
    const fs::path sp = cfg.output / "split.json";
    if (fs::exists(sp) && !(load_fold_split(sp) == fresh))
      throw std::runtime_error("existing split.json differs from the configured split");
    save_fold_split(fresh, sp);
    result.split = fresh;
  });

  std::vector<int> folds = cfg.run_folds;
  if (folds.empty())
    for (int f = 0; f < cfg.folds; ++f) folds.push_back(f);

  CaseStore store(cfg.dataset);
  std::vector<CaseMetrics> pooled;
  for (int fold : folds) {
    const std::string tag = "fold " + std::to_string(fold);
    for (Role role : {Role::Coarse, Role::Fine2D, Role::Fine3D}) {
      say(tag + ": training " + role_name(role));
      stage(tag + ", stage " + role_name(role), [&] { train_stage(cfg, result.split, fold, role, store); });
    }
    const fs::path fd = fold_dir(cfg, fold);
    std::vector<CaseMetrics> cases;
    stage(tag + ", stage infer", [&] {
      if (fs::exists(fd / "infer.done")) {
        cases = metrics_from_json(read_json_file(fd / "metrics.json"));
        return;
      }
      say(tag + ": inference");
      cases = infer_and_evaluate(cfg, {checkpoint_path(cfg, fold, Role::Coarse)},
                                 {checkpoint_path(cfg, fold, Role::Fine2D)},
                                 {checkpoint_path(cfg, fold, Role::Fine3D)},
                                 result.split.scans_of(result.split.validation_patients(fold)), fd, store);
      write_json_file(metrics_json(cases), fd / "metrics.json");
      touch(fd / "infer.done");
    });
    stage(tag + ", stage evaluate", [&] { write_report(aggregate_report(cases), fd); });
    pooled.insert(pooled.end(), cases.begin(), cases.end());
  }

  stage("aggregate", [&] {
    result.cross_validation = aggregate_report(pooled);
    write_report(result.cross_validation, cfg.output);
  });

  if (!result.split.holdout.empty()) {
    stage("holdout", [&] {
      const fs::path hd = cfg.output / "holdout";
      std::vector<CaseMetrics> cases;
      if (fs::exists(hd / "infer.done")) {
        cases = metrics_from_json(read_json_file(hd / "metrics.json"));
      } else {
        say("holdout: inference");
        const std::vector<int> used = cfg.fold_ensemble ? folds : std::vector<int>{folds.front()};
        std::vector<fs::path> c, f2, f3;
        for (int f : used) {
          c.push_back(checkpoint_path(cfg, f, Role::Coarse));
          f2.push_back(checkpoint_path(cfg, f, Role::Fine2D));
          f3.push_back(checkpoint_path(cfg, f, Role::Fine3D));
        }
        cases = infer_and_evaluate(cfg, c, f2, f3, result.split.holdout_scans(), hd, store);
        write_json_file(metrics_json(cases), hd / "metrics.json");
        touch(hd / "infer.done");
      }
      result.holdout = aggregate_report(cases);
      write_report(*result.holdout, hd);
    });
  }
  stage("manifest", [&] { write_manifest(cfg.output); });
  return result;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 initialisation failed");
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    if (in.eof()) break;
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char b[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(b, sizeof(b), "%02x", md[i]);
    hex += b;
  }
  return hex;
}

void write_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& f : files)
    entries.push_back({{"path", fs::relative(f, dir).generic_string()},
                       {"bytes", fs::file_size(f)},
                       {"sha256", sha256_file(f)}});
  write_json_file({{"files", entries}}, dir / "manifest.json");
}

}  // namespace tassnet
