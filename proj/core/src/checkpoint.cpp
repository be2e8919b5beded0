#include "tristream/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "tristream/io.hpp"

namespace tristream {

void save_checkpoint(const std::filesystem::path& dir, const NetworkConfig& cfg,
                     const ParamList& params) {
  std::filesystem::create_directories(dir / "params");
  nlohmann::ordered_json manifest;
  manifest["format"] = 1;
  manifest["network"] = nlohmann::ordered_json::parse(network_config_to_json(cfg));
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    nlohmann::ordered_json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor.shape();
    plist.push_back(entry);
    write_tensor(dir / "params" / (p.name + ".t3sr"), p.tensor);
  }
  manifest["params"] = plist;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ValueError("save_checkpoint: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

namespace {

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in)
    throw ValueError("checkpoint: no manifest.json in " + dir.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

}  // namespace

NetworkConfig load_checkpoint_config(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  return network_config_from_json(manifest.at("network").dump());
}

void load_checkpoint_params(const std::filesystem::path& dir, ParamList& params) {
  const auto manifest = read_manifest(dir);
  const auto& plist = manifest.at("params");
  if (plist.size() != params.size())
    throw ValueError("checkpoint: parameter count mismatch (" +
                     std::to_string(plist.size()) + " stored, " +
                     std::to_string(params.size()) + " expected)");
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string name = plist.at(i).at("name").get<std::string>();
    if (name != params[i].name)
      throw ValueError("checkpoint: parameter name mismatch at index " +
                       std::to_string(i) + ": stored '" + name + "', expected '" +
                       params[i].name + "'");
    Tensor stored = read_tensor(dir / "params" / (name + ".t3sr"));
    if (stored.shape() != params[i].tensor.shape())
      throw ValueError("checkpoint: shape mismatch for '" + name + "'");
    std::copy(stored.data().begin(), stored.data().end(),
              params[i].tensor.mut_data().begin());
  }
}

}  // namespace tristream
