#include "tassnet/folds.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "tassnet/config_io.hpp"

namespace tassnet {

std::vector<std::string> FoldSplit::validation_patients(int fold) const {
  if (fold < 0 || fold >= k()) throw std::out_of_range("fold " + std::to_string(fold) + " does not exist");
  return folds[static_cast<std::size_t>(fold)];
}

std::vector<std::string> FoldSplit::train_patients(int fold) const {
  if (fold < 0 || fold >= k()) throw std::out_of_range("fold " + std::to_string(fold) + " does not exist");
  std::vector<std::string> out;
  for (int f = 0; f < k(); ++f)
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  return out;
}

std::vector<std::string> FoldSplit::scans_of(const std::vector<std::string>& patients) const {
  std::vector<std::string> out;
  for (const auto& p : patients) {
    const auto it = scans.find(p);
    if (it == scans.end()) throw std::out_of_range("unknown patient '" + p + "'");
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

void FoldSplit::validate() const {
  std::set<std::string> seen;
  auto claim = [&](const std::string& p) {
    if (!seen.insert(p).second) throw std::logic_error("patient '" + p + "' appears in more than one set");
    if (!scans.count(p)) throw std::logic_error("patient '" + p + "' has no scan list");
  };
  for (const auto& f : folds)
    for (const auto& p : f) claim(p);
  for (const auto& p : holdout) claim(p);
  std::map<std::string, std::string> owner;
  for (const auto& [p, list] : scans)
    for (const auto& s : list) {
      const auto [it, fresh] = owner.emplace(s, p);
      if (!fresh) throw std::logic_error("scan '" + s + "' belongs to '" + it->second + "' and '" + p + "'");
    }
}

FoldSplit make_folds(const PatientScans& patients, int k, std::uint64_t seed, int holdout_patients) {
  if (k < 1) throw std::invalid_argument("fold count must be positive");
  if (holdout_patients < 0) throw std::invalid_argument("holdout size must be non-negative");
  const int available = static_cast<int>(patients.size()) - holdout_patients;
  if (k > available)
    throw std::invalid_argument("cannot build " + std::to_string(k) + " folds from " +
                                std::to_string(std::max(available, 0)) + " patients");
  std::vector<std::string> ids;
  for (const auto& [p, s] : patients) ids.push_back(p);  // map order is sorted
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  FoldSplit split;
  split.seed = seed;
  split.scans = patients;
  split.folds.resize(static_cast<std::size_t>(k));
  split.holdout.assign(ids.begin(), ids.begin() + holdout_patients);
  for (std::size_t i = static_cast<std::size_t>(holdout_patients); i < ids.size(); ++i)
    split.folds[(i - holdout_patients) % k].push_back(ids[i]);
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  split.validate();
  return split;
}

void to_json(nlohmann::json& j, const FoldSplit& s) {
  j = {{"seed", s.seed}, {"folds", s.folds}, {"holdout", s.holdout}, {"scans", s.scans}};
}

void from_json(const nlohmann::json& j, FoldSplit& s) {
  s.seed = j.value("seed", std::uint64_t{0});
  s.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
  s.holdout = j.value("holdout", std::vector<std::string>{});
  s.scans = j.at("scans").get<PatientScans>();
}

void save_fold_split(const FoldSplit& s, const std::filesystem::path& path) {
  write_json_file(nlohmann::json(s), path);
}

FoldSplit load_fold_split(const std::filesystem::path& path) {
  FoldSplit s = read_json_file(path).get<FoldSplit>();
  s.validate();
  return s;
}

}  // namespace tassnet
