#include "tassnet/config_io.hpp"

#include <fstream>
#include <stdexcept>

namespace tassnet {

void to_json(nlohmann::json& j, const ClassScheme& s) {
  j = nlohmann::json::array();
  for (const auto& e : s.entries()) j.push_back({{"id", e.id}, {"name", e.name}});
}

ClassScheme class_scheme_from_json(const nlohmann::json& j) {
  std::vector<ClassEntry> entries;
  for (const auto& e : j) entries.push_back({e.at("id").get<int>(), e.at("name").get<std::string>()});
  return ClassScheme(std::move(entries));
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace tassnet
