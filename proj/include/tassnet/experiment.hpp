#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tassnet/folds.hpp"
#include "tassnet/metrics.hpp"
#include "tassnet/network.hpp"
#include "tassnet/schedule.hpp"
#include "tassnet/trainer.hpp"

namespace tassnet {

struct StageConfig {
  NetworkConfig network;
  TrainConfig train;
  LRScheduleConfig schedule;
  bool operator==(const StageConfig&) const = default;
};

/// Everything a cross-validation run needs; serialized as JSON.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output;
  int folds = 5;
  int holdout_patients = 0;
  std::uint64_t split_seed = 0;
  /// Subset of folds to run; empty runs all.
  std::vector<int> run_folds;
  std::size_t coarse_voxel_budget = 0;
  /// Average the checkpoints of every fold when predicting the holdout set.
  bool fold_ensemble = false;
  StageConfig coarse;
  StageConfig fine_2d;
  StageConfig fine_3d;

  /// Full-size recipe: 250/1000 epochs, 256x256x44 patches, default widths.
  static RunConfig standard();
  /// Small networks and short schedules for the phantom dataset (96x96x24 volumes).
  static RunConfig tiny();

  Index3 patch_size() const { return fine_3d.network.input_shape; }
  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& s);
void from_json(const nlohmann::json& j, StageConfig& s);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

enum class Role { Coarse, Fine2D, Fine3D };
std::string role_name(Role r);
Role parse_role(const std::string& name);

/// Lazily loads images (z-score normalized) and fine label maps from a dataset directory.
class CaseStore {
 public:
  explicit CaseStore(std::filesystem::path dataset);
  const Volume& image(const std::string& scan);
  const Volume& raw_image(const std::string& scan);
  const LabelMap& labels(const std::string& scan);
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, Volume> raw_, normalized_;
  std::map<std::string, LabelMap> labels_;
};

/// Training cases for one role: coarse targets on (downsampled) full volumes, or crops
/// around the ground-truth center of mass for the fine roles.
std::vector<Case> prepare_cases(CaseStore& store, const std::vector<std::string>& scans, Role role,
                                const RunConfig& cfg);

std::filesystem::path fold_dir(const RunConfig& cfg, int fold);
std::filesystem::path stage_dir(const RunConfig& cfg, int fold, Role role);
std::filesystem::path checkpoint_path(const RunConfig& cfg, int fold, Role role);

/// Trains one role of one fold; skipped when its completion marker exists.
void train_stage(const RunConfig& cfg, const FoldSplit& split, int fold, Role role,
                 CaseStore& store, bool force = false);

/// Runs the cascade on the fold's validation scans, writes predictions and sidecars, and
/// returns the per-case metrics.
std::vector<CaseMetrics> infer_and_evaluate(const RunConfig& cfg,
                                            const std::vector<std::filesystem::path>& coarse,
                                            const std::vector<std::filesystem::path>& fine_2d,
                                            const std::vector<std::filesystem::path>& fine_3d,
                                            const std::vector<std::string>& scans,
                                            const std::filesystem::path& out_dir, CaseStore& store);

struct ExperimentResult {
  FoldSplit split;
  MetricsReport cross_validation;
  std::optional<MetricsReport> holdout;
};

/// Split, then per fold: coarse, fine 2D and fine 3D training, inference and evaluation on
/// the validation patients; then the pooled report, optional holdout report and a SHA-256
/// manifest of every artifact. Completed stages are skipped on rerun. Stage failures are
/// appended to errors.log and rethrown tagged with fold and stage.
ExperimentResult run_experiment(const RunConfig& cfg,
                                const std::function<void(const std::string&)>& progress = {});

std::string sha256_file(const std::filesystem::path& path);
/// manifest.json: relative path, size and SHA-256 of every file under `dir`.
void write_manifest(const std::filesystem::path& dir);

}  // namespace tassnet
