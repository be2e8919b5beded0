#include "tristream/config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tristream {

namespace {

struct SchemaEntry {
  const char* key;
  const char* def;
};

// Every recognized key with its default. Desk-scale geometry by default;
// paper-scale values (224/256 crops, theta2=16) stay reachable through
// config files.
constexpr std::array kSchema{
    SchemaEntry{"net.theta1", "8"},
    SchemaEntry{"net.theta2", "4"},
    SchemaEntry{"net.theta3", "2"},
    SchemaEntry{"net.beta", "0.125"},
    SchemaEntry{"net.in_channels", "1"},
    SchemaEntry{"net.frames", "8"},
    SchemaEntry{"net.crop", "32"},
    SchemaEntry{"net.stem_width", "8"},
    SchemaEntry{"net.widths", "8,16,32,64"},
    SchemaEntry{"net.blocks", "2,2,2,2"},
    SchemaEntry{"net.head", "attention"},
    SchemaEntry{"net.pathways", "all"},
    SchemaEntry{"net.num_classes", "4"},
    SchemaEntry{"net.attn_heads", "4"},
    SchemaEntry{"net.lstm_hidden", "32"},
    SchemaEntry{"net.roi_size", "7"},
    SchemaEntry{"train.lr", "0.05"},
    SchemaEntry{"train.momentum", "0.9"},
    SchemaEntry{"train.weight_decay", "1e-5"},
    SchemaEntry{"train.dropout", "0.5"},
    SchemaEntry{"train.batch_size", "8"},
    SchemaEntry{"train.epochs", "20"},
    SchemaEntry{"train.hflip", "true"},
    SchemaEntry{"data.train_manifest", ""},
    SchemaEntry{"data.test_manifest", ""},
    SchemaEntry{"data.detect_manifest", ""},
    SchemaEntry{"synth.mode", "classification"},
    SchemaEntry{"synth.classes", "4"},
    SchemaEntry{"synth.frames", "8"},
    SchemaEntry{"synth.spatial", "32"},
    SchemaEntry{"synth.channels", "1"},
    SchemaEntry{"synth.object", "6"},
    SchemaEntry{"synth.speed", "1"},
    SchemaEntry{"synth.noise", "0.1"},
    SchemaEntry{"synth.fps", "8"},
    SchemaEntry{"synth.train", "2000"},
    SchemaEntry{"synth.test", "500"},
    SchemaEntry{"eval.n_clips", "10"},
    SchemaEntry{"eval.checkpoint", ""},
    SchemaEntry{"ablate.theta2", "4,6,12,16,32"},
    SchemaEntry{"ablate.heads", "bilstm,attention,none"},
    SchemaEntry{"ablate.betas", "1,0.25,0.125"},
    SchemaEntry{"ablate.frames", "48"},
    SchemaEntry{"ablate.spatial", "112"},
    SchemaEntry{"ablate.train", "96"},
    SchemaEntry{"ablate.test", "48"},
    SchemaEntry{"ablate.epochs", "2"},
};

bool known_key(const std::string& key) {
  for (const auto& e : kSchema)
    if (key == e.key) return true;
  return false;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& e : kSchema) c.values_[e.key] = e.def;
  return c;
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("config: cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValueError("config: expected key = value on line " + std::to_string(line_no) +
                       " of " + path.string());
    set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ValueError("config: override must be key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ValueError("config: unknown key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValueError("config: unknown key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  try {
    size_t pos = 0;
    const int v = std::stoi(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const ValueError&) {
    throw;
  } catch (const std::exception&) {
    throw ValueError("config: key '" + key + "' is not an integer: '" + get(key) + "'");
  }
}

double Config::get_double(const std::string& key) const {
  try {
    size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const ValueError&) {
    throw;
  } catch (const std::exception&) {
    throw ValueError("config: key '" + key + "' is not a number: '" + get(key) + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValueError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream ss(get(key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const std::string t = trim(tok);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& t : get_string_list(key)) {
    try {
      out.push_back(std::stoi(t));
    } catch (const std::exception&) {
      throw ValueError("config: key '" + key + "' has a non-integer element '" + t + "'");
    }
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& t : get_string_list(key)) {
    try {
      out.push_back(std::stod(t));
    } catch (const std::exception&) {
      throw ValueError("config: key '" + key + "' has a non-numeric element '" + t + "'");
    }
  }
  return out;
}

NetworkConfig Config::network(bool validated) const {
  NetworkConfig net;
  net.strides = {get_int("net.theta1"), get_int("net.theta2"), get_int("net.theta3")};
  net.beta = get_double("net.beta");
  net.in_channels = get_int("net.in_channels");
  net.frames = get_int("net.frames");
  net.crop = get_int("net.crop");
  net.stem_width = get_int("net.stem_width");
  const auto widths = get_int_list("net.widths");
  const auto blocks = get_int_list("net.blocks");
  if (widths.size() != 4)
    throw ValueError("config: net.widths must list 4 stage widths (res2..res5)");
  if (blocks.size() != 4)
    throw ValueError("config: net.blocks must list 4 block counts");
  for (size_t i = 0; i < 4; ++i) {
    net.slow_widths[i] = widths[i];
    net.blocks[i] = blocks[i];
  }
  net.head = head_kind_from_string(get("net.head"));
  net.pathways = pathway_set_from_string(get("net.pathways"));
  net.num_classes = get_int("net.num_classes");
  net.attn_heads = get_int("net.attn_heads");
  net.lstm_hidden = get_int("net.lstm_hidden");
  net.roi_size = get_int("net.roi_size");
  if (validated) net.validate();
  return net;
}

TrainConfig Config::train(uint64_t seed) const {
  TrainConfig t;
  t.lr = get_double("train.lr");
  t.momentum = get_double("train.momentum");
  t.weight_decay = get_double("train.weight_decay");
  t.dropout_p = get_double("train.dropout");
  t.batch_size = get_int("train.batch_size");
  t.epochs = get_int("train.epochs");
  t.hflip = get_bool("train.hflip");
  t.seed = seed;
  t.validate();
  return t;
}

SyntheticSpec Config::synthetic() const {
  SyntheticSpec s;
  s.num_classes = get_int("synth.classes");
  s.frames = get_int("synth.frames");
  s.spatial = get_int("synth.spatial");
  s.channels = get_int("synth.channels");
  s.object_size = get_int("synth.object");
  s.speed = get_int("synth.speed");
  s.noise_std = get_double("synth.noise");
  s.fps = get_int("synth.fps");
  s.validate();
  return s;
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

std::string network_config_to_json(const NetworkConfig& cfg) {
  nlohmann::ordered_json j;
  j["theta1"] = cfg.strides.theta1;
  j["theta2"] = cfg.strides.theta2;
  j["theta3"] = cfg.strides.theta3;
  j["beta"] = cfg.beta;
  j["in_channels"] = cfg.in_channels;
  j["frames"] = cfg.frames;
  j["crop"] = cfg.crop;
  j["stem_width"] = cfg.stem_width;
  j["widths"] = cfg.slow_widths;
  j["blocks"] = cfg.blocks;
  j["head"] = to_string(cfg.head);
  j["pathways"] = to_string(cfg.pathways);
  j["num_classes"] = cfg.num_classes;
  j["attn_heads"] = cfg.attn_heads;
  j["lstm_hidden"] = cfg.lstm_hidden;
  j["roi_size"] = cfg.roi_size;
  return j.dump(2);
}

NetworkConfig network_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("network config: bad json: ") + e.what());
  }
  NetworkConfig cfg;
  try {
    cfg.strides = {j.at("theta1").get<int>(), j.at("theta2").get<int>(),
                   j.at("theta3").get<int>()};
    cfg.beta = j.at("beta").get<double>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.frames = j.at("frames").get<int>();
    cfg.crop = j.at("crop").get<int>();
    cfg.stem_width = j.at("stem_width").get<int>();
    const auto widths = j.at("widths").get<std::vector<int>>();
    const auto blocks = j.at("blocks").get<std::vector<int>>();
    if (widths.size() != 4 || blocks.size() != 4)
      throw ValueError("network config: widths/blocks must have 4 entries");
    for (size_t i = 0; i < 4; ++i) {
      cfg.slow_widths[i] = widths[i];
      cfg.blocks[i] = blocks[i];
    }
    cfg.head = head_kind_from_string(j.at("head").get<std::string>());
    cfg.pathways = pathway_set_from_string(j.at("pathways").get<std::string>());
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.attn_heads = j.at("attn_heads").get<int>();
    cfg.lstm_hidden = j.at("lstm_hidden").get<int>();
    cfg.roi_size = j.at("roi_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("network config: missing or bad field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace tristream
