#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tristream/backbone.hpp"
#include "tristream/synthetic.hpp"
#include "tristream/trainer.hpp"

namespace tristream {

// Plain-text key = value configuration with a fixed schema; unknown keys
// are rejected at load/override time. '#' starts a comment.
class Config {
 public:
  static Config defaults();

  void load_file(const std::filesystem::path& path);
  // "dotted.key=value" override (CLI --set)
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  NetworkConfig network(bool validated = true) const;
  TrainConfig train(uint64_t seed) const;
  SyntheticSpec synthetic() const;

  std::string dump() const;  // resolved key = value lines, sorted

 private:
  std::map<std::string, std::string> values_;
};

// NetworkConfig <-> JSON (checkpoint manifests).
std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& json_text);

}  // namespace tristream
