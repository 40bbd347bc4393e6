#include "tassnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tassnet/config_io.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

namespace tassnet {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'S', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const Network& net, const ClassScheme& scheme,
                     const std::filesystem::path& path, const nlohmann::json& meta) {
  if (scheme.size() != net.config().num_classes)
    throw std::invalid_argument("class scheme size does not match the network head");
  nlohmann::json header;
  header["network"] = net.config();
  header["scheme"] = scheme;
  header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  auto& params = header["parameters"] = nlohmann::json::array();
  for (const Parameter* p : net.parameters()) params.push_back({{"name", p->name}, {"shape", p->shape}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : net.parameters())
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": checkpoint not found");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  const auto len = get<std::uint64_t>(in, path);
  if (len > (1u << 26)) throw std::runtime_error(path.string() + ": corrupt checkpoint header");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw std::runtime_error(path.string() + ": truncated checkpoint");

  nlohmann::json header;
  NetworkConfig cfg;
  try {
    header = nlohmann::json::parse(text);
    cfg = header.at("network").get<NetworkConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck{Network(cfg), class_scheme_from_json(header.at("scheme")), header.value("meta", nlohmann::json::object())};
  const auto& listed = header.at("parameters");
  auto params = ck.network.parameters();
  if (listed.size() != params.size())
    throw std::runtime_error(path.string() + ": parameter count does not match the configuration");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (listed[i].at("name").get<std::string>() != p.name ||
        listed[i].at("shape").get<std::vector<int>>() != p.shape)
      throw std::runtime_error(path.string() + ": parameter '" + p.name + "' does not match");
    if (!in.read(reinterpret_cast<char*>(p.value.data()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(float))))
      throw std::runtime_error(path.string() + ": truncated checkpoint");
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error(path.string() + ": trailing data after parameters");
  return ck;
}

}  // namespace tassnet
