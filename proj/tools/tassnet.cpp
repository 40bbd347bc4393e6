#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tassnet/config_io.hpp"
#include "tassnet/experiment.hpp"
#include "tassnet/folds.hpp"
#include "tassnet/inference.hpp"
#include "tassnet/metrics.hpp"
#include "tassnet/nifti_io.hpp"
#include "tassnet/phantom.hpp"

namespace fs = std::filesystem;
using namespace tassnet;

namespace {

// strips .nii / .nii.gz
std::string stem_of(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii"})
    if (name.size() > std::strlen(ext) && name.ends_with(ext)) return name.substr(0, name.size() - std::strlen(ext));
  return p.stem().string();
}

std::vector<fs::path> nifti_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (e.is_regular_file() && (n.ends_with(".nii") || n.ends_with(".nii.gz"))) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage bi-atrial segmentation: phantom data, training, inference, evaluation"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  fs::path ph_out;
  int ph_patients = 10, ph_scans = 1;
  std::uint64_t ph_seed = 0;
  PhantomSpec ph_spec;
  phantom->add_option("-o,--out", ph_out, "Dataset directory")->required();
  phantom->add_option("--patients", ph_patients, "Number of patients")->capture_default_str();
  phantom->add_option("--scans-per-patient", ph_scans, "Scans per patient")->capture_default_str();
  phantom->add_option("--seed", ph_seed, "Generator seed")->capture_default_str();
  phantom->add_option("--noise", ph_spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  phantom->add_option("--wall", ph_spec.la.wall, "Wall thickness in mm (both atria)")->capture_default_str();

  // split
  auto* split = app.add_subcommand("split", "Write a patient-level fold split");
  fs::path sp_dataset, sp_out;
  int sp_folds = 5, sp_holdout = 0;
  std::uint64_t sp_seed = 0;
  split->add_option("--dataset", sp_dataset, "Dataset directory with patients.json")->required();
  split->add_option("-o,--out", sp_out, "Output split file")->required();
  split->add_option("-k,--folds", sp_folds, "Number of folds")->capture_default_str();
  split->add_option("--holdout", sp_holdout, "Patients held out of all folds")->capture_default_str();
  split->add_option("--seed", sp_seed, "Shuffle seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train one stage of one fold");
  fs::path tr_config;
  int tr_fold = 0;
  std::string tr_stage;
  bool tr_force = false;
  train->add_option("-c,--config", tr_config, "Run configuration (JSON)")->required();
  train->add_option("--fold", tr_fold, "Fold index")->capture_default_str();
  train->add_option("--stage", tr_stage, "coarse, fine_2d or fine_3d")->required();
  train->add_flag("--force", tr_force, "Retrain even if the stage is marked done");

  // infer
  auto* infer = app.add_subcommand("infer", "Run the cascade on one or more volumes");
  std::vector<fs::path> in_inputs, in_coarse, in_f2, in_f3;
  fs::path in_out;
  bool in_probs = false;
  std::size_t in_budget = 0;
  infer->add_option("-i,--input", in_inputs, "Input volumes")->required();
  infer->add_option("--coarse", in_coarse, "Coarse checkpoint(s)")->required();
  infer->add_option("--fine-2d", in_f2, "Fine 2D checkpoint(s)")->required();
  infer->add_option("--fine-3d", in_f3, "Fine 3D checkpoint(s)")->required();
  infer->add_option("-o,--out", in_out, "Output directory")->required();
  infer->add_flag("--probabilities", in_probs, "Also write one probability volume per class");
  infer->add_option("--coarse-voxel-budget", in_budget, "Downsample the coarse input above this many voxels");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  fs::path ev_pred, ev_gt, ev_out;
  bool ev_ref = false;
  evaluate->add_option("--pred", ev_pred, "Directory of predicted label maps")->required();
  evaluate->add_option("--gt", ev_gt, "Directory of ground-truth label maps")->required();
  evaluate->add_option("-o,--out", ev_out, "Directory for report.txt and report.csv");
  evaluate->add_flag("--paper-reference", ev_ref, "Append the published ensemble row");

  // run
  auto* run = app.add_subcommand("run", "Full cross-validation experiment");
  fs::path run_config, run_dataset, run_output, run_dump;
  std::string run_preset;
  run->add_option("-c,--config", run_config, "Run configuration (JSON)");
  run->add_option("--preset", run_preset, "Use a built-in configuration: tiny or standard");
  run->add_option("--dataset", run_dataset, "Override the dataset directory");
  run->add_option("--output", run_output, "Override the output directory");
  run->add_option("--dump-config", run_dump, "Write the resolved configuration and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (phantom->parsed()) {
      ph_spec.ra.wall = ph_spec.la.wall;
      const auto map = write_phantom_dataset(ph_out, ph_patients, ph_scans, ph_spec, ph_seed);
      std::cout << "wrote " << map.size() << " patients to " << ph_out << "\n";
    } else if (split->parsed()) {
      const FoldSplit s = make_folds(read_patients(sp_dataset), sp_folds, sp_seed, sp_holdout);
      save_fold_split(s, sp_out);
      for (int f = 0; f < s.k(); ++f)
        std::cout << "fold " << f << ": " << s.folds[f].size() << " patients\n";
      if (!s.holdout.empty()) std::cout << "holdout: " << s.holdout.size() << " patients\n";
    } else if (train->parsed()) {
      const RunConfig cfg = load_run_config(tr_config);
      cfg.validate();
      fs::create_directories(cfg.output);
      const fs::path sp = cfg.output / "split.json";
      FoldSplit s;
      if (fs::exists(sp)) {
        s = load_fold_split(sp);
      } else {
        s = make_folds(read_patients(cfg.dataset), cfg.folds, cfg.split_seed, cfg.holdout_patients);
        save_fold_split(s, sp);
      }
      CaseStore store(cfg.dataset);
      const Role role = parse_role(tr_stage);
      train_stage(cfg, s, tr_fold, role, store, tr_force);
      std::cout << "checkpoint: " << checkpoint_path(cfg, tr_fold, role) << "\n";
    } else if (infer->parsed()) {
      PipelineModels models{load_role("coarse", in_coarse), load_role("fine_2d", in_f2),
                            load_role("fine_3d", in_f3)};
      PipelineOptions opts;
      opts.coarse_voxel_budget = in_budget;
      fs::create_directories(in_out);
      for (const auto& path : in_inputs) {
        const std::string stem = stem_of(path);
        const PipelineResult r = full_pipeline(models, load_volume(path), opts);
        save_label_map(r.labels, in_out / (stem + "_labels.nii.gz"));
        write_window_sidecar(r.window, r.center, in_out / (stem + "_window.txt"));
        if (in_probs) save_probability_channels(r.probabilities, in_out, stem);
        std::printf("%s: %.2f s%s\n", stem.c_str(), r.total_seconds(),
                    r.center.fallback ? " (no coarse foreground, window centred on grid)" : "");
      }
    } else if (evaluate->parsed()) {
      std::vector<CaseMetrics> cases;
      for (const auto& gt_path : nifti_files(ev_gt)) {
        const std::string stem = stem_of(gt_path);
        fs::path pred_path;
        for (const auto& cand : {stem + ".nii.gz", stem + ".nii", stem + "_labels.nii.gz"})
          if (fs::exists(ev_pred / cand)) {
            pred_path = ev_pred / cand;
            break;
          }
        if (pred_path.empty()) throw std::runtime_error("no prediction for '" + stem + "'");
        cases.push_back(evaluate_case(load_label_map(pred_path, ClassScheme::fine()),
                                      load_label_map(gt_path, ClassScheme::fine()), stem));
      }
      const MetricsReport rep = aggregate_report(cases);
      std::cout << rep.format_table(ev_ref);
      if (!ev_out.empty()) {
        fs::create_directories(ev_out);
        std::ofstream(ev_out / "report.txt") << rep.format_table(ev_ref);
        rep.write_csv(ev_out / "report.csv");
      }
    } else if (run->parsed()) {
      RunConfig cfg;
      if (!run_config.empty()) cfg = load_run_config(run_config);
      else if (run_preset == "tiny") cfg = RunConfig::tiny();
      else if (run_preset.empty() || run_preset == "standard") cfg = RunConfig::standard();
      else throw std::invalid_argument("unknown preset '" + run_preset + "'");
      if (!run_dataset.empty()) cfg.dataset = run_dataset;
      if (!run_output.empty()) cfg.output = run_output;
      if (!run_dump.empty()) {
        save_run_config(cfg, run_dump);
        return 0;
      }
      const ExperimentResult r = run_experiment(cfg, log_line);
      std::cout << "cross-validation (" << r.split.k() << " folds)\n"
                << r.cross_validation.format_table(true);
      if (r.holdout) std::cout << "holdout\n" << r.holdout->format_table(true);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
