#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tassnet {

using PatientScans = std::map<std::string, std::vector<std::string>>;

/// Patient-level partition: every scan of a patient lives in exactly one fold or in the
/// holdout set.
struct FoldSplit {
  std::vector<std::vector<std::string>> folds;  // patient ids
  std::vector<std::string> holdout;             // patient ids
  PatientScans scans;
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(folds.size()); }
  std::vector<std::string> validation_patients(int fold) const;
  /// All non-holdout patients outside `fold`.
  std::vector<std::string> train_patients(int fold) const;
  std::vector<std::string> scans_of(const std::vector<std::string>& patients) const;
  std::vector<std::string> holdout_scans() const { return scans_of(holdout); }

  /// Throws std::logic_error if a patient appears twice, a scan is shared between
  /// patients, or a listed patient has no scan entry.
  void validate() const;

  bool operator==(const FoldSplit&) const = default;
};

/// Sorted patient ids, shuffled by `seed`; the first `holdout_patients` become the holdout
/// set and the rest are dealt round-robin into `k` folds.
FoldSplit make_folds(const PatientScans& patients, int k, std::uint64_t seed,
                     int holdout_patients = 0);

void to_json(nlohmann::json& j, const FoldSplit& s);
void from_json(const nlohmann::json& j, FoldSplit& s);

void save_fold_split(const FoldSplit& s, const std::filesystem::path& path);
FoldSplit load_fold_split(const std::filesystem::path& path);

}  // namespace tassnet
