#include "casgnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "casgnn/errors.hpp"

namespace casgnn {

const std::vector<ConfigKey>& KeyValueConfig::registry() {
  static const std::vector<ConfigKey> keys = {
      {"model.mode", "cgr", "reasoning head: fusion, hr or cgr"},
      {"model.channels", "16", "node embedding channels c"},
      {"graph.n", "3", "scales per modality (N = 2n nodes)"},
      {"graph.t", "3", "message passing iterations T"},
      {"cascade.w", "3", "pyramid / cascade levels W"},
      {"backbone.channels", "", "comma list of per-level encoder channels (default 8,16,32,... sized to cascade.w)"},
      {"data.size", "64", "square input size in pixels"},
      {"train.steps", "2000", "optimizer steps (used when train.epochs = 0)"},
      {"train.epochs", "0", "epochs; overrides train.steps when > 0"},
      {"train.batch", "4", "mini-batch size"},
      {"train.lr", "0.0001", "base learning rate"},
      {"train.poly_power", "0.9", "poly schedule exponent"},
      {"train.weight_decay", "0.0001", "L2 coefficient added to gradients"},
      {"train.seed", "0", "seed for init, batch order and augmentation"},
      {"train.flip", "true", "random horizontal flip"},
      {"train.rotate", "true", "random quarter-turn rotation"},
      {"train.brightness", "true", "random brightness scale in [0.7, 1.3]"},
      {"train.deterministic", "true", "fixed seeds and single-threaded reductions"},
      {"train.stop_mae", "-1", "early-exit train MAE target (negative disables)"},
      {"train.stop_fbeta", "-1", "early-exit train F-measure target (negative disables)"},
      {"train.stop_check_every", "0", "steps between early-exit checks (0 disables)"},
      {"gen.min_objects", "1", "minimum shapes per scene (incl. salient)"},
      {"gen.max_objects", "3", "maximum shapes per scene"},
      {"gen.texture", "0.08", "background texture amplitude"},
      {"gen.depth_noise", "0.02", "uniform depth noise amplitude"},
      {"gen.min_area", "0.04", "salient area lower bound (fraction)"},
      {"gen.max_area", "0.20", "salient area upper bound (fraction)"},
      {"gen.camouflage", "0.06", "rgb boundary contrast budget when depth-salient"},
  };
  return keys;
}

void KeyValueConfig::require_known(const std::string& key) {
  for (const ConfigKey& k : registry()) {
    if (k.name == key) return;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  KeyValueConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto is_space = [](unsigned char c) { return std::isspace(c); };
      s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), is_space));
      s.erase(std::find_if_not(s.rbegin(), s.rend(), is_space).base(), s.end());
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require_known(key);
    config.file_values_.emplace_back(key, value);
  }
  return config;
}

void KeyValueConfig::override_value(const std::string& key, const std::string& value) {
  require_known(key);
  overrides_.emplace_back(key, value);
}

void KeyValueConfig::set_default(const std::string& key, const std::string& value) {
  require_known(key);
  profile_defaults_.emplace_back(key, value);
}

bool KeyValueConfig::is_overridden(const std::string& key) const {
  return std::any_of(overrides_.begin(), overrides_.end(),
                     [&](const auto& kv) { return kv.first == key; });
}

std::string KeyValueConfig::get(const std::string& key) const {
  require_known(key);
  const auto last_match = [&](const std::vector<std::pair<std::string, std::string>>& layer,
                              std::string* out) {
    bool found = false;
    for (const auto& [k, v] : layer) {
      if (k == key) {
        *out = v;
        found = true;
      }
    }
    return found;
  };
  std::string value;
  if (last_match(overrides_, &value)) return value;
  if (last_match(file_values_, &value)) return value;
  if (last_match(profile_defaults_, &value)) return value;
  for (const ConfigKey& k : registry()) {
    if (k.name == key) return k.default_value;
  }
  return {};
}

int KeyValueConfig::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const int parsed = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " expects an integer, got '" + v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double parsed = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + " expects a number, got '" + v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("key " + key + " expects a boolean, got '" + v + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  const std::string v = get(key);
  std::vector<int> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("key " + key + " expects a comma list of integers, got '" + v + "'");
    }
  }
  return out;
}

void apply_paper_profile(KeyValueConfig& config) {
  config.set_default("data.size", "256");
  config.set_default("train.batch", "8");
  config.set_default("train.lr", "0.0001");
  config.set_default("train.epochs", "40");
  config.set_default("train.steps", "0");
}

ModelConfig model_config_from(const KeyValueConfig& config) {
  ModelConfig model;
  model.mode = parse_mode(config.get("model.mode"));
  model.input_h = model.input_w = config.get_int("data.size");
  model.node_channels = config.get_int("model.channels");
  model.scales_per_modality = config.get_int("graph.n");
  model.iterations = config.get_int("graph.t");
  model.seed = static_cast<std::uint32_t>(config.get_int("train.seed"));
  const int levels = config.get_int("cascade.w");
  if (levels < 1) throw ConfigError("cascade.w must be at least 1");
  std::vector<int> channels = config.get_int_list("backbone.channels");
  if (channels.empty()) {
    for (int i = 0; i < levels; ++i) channels.push_back(8 << std::min(i, 2));
  }
  if (static_cast<int>(channels.size()) != levels) {
    throw ConfigError("backbone.channels lists " + std::to_string(channels.size()) +
                      " levels but cascade.w is " + std::to_string(levels));
  }
  model.level_channels = channels;
  return model;
}

TrainConfig train_config_from(const KeyValueConfig& config) {
  TrainConfig train;
  train.model = model_config_from(config);
  train.steps = config.get_int("train.steps");
  train.epochs = config.get_int("train.epochs");
  train.batch_size = config.get_int("train.batch");
  train.base_lr = config.get_double("train.lr");
  train.poly_power = config.get_double("train.poly_power");
  train.weight_decay = config.get_double("train.weight_decay");
  train.augment_flip = config.get_bool("train.flip");
  train.augment_rotate = config.get_bool("train.rotate");
  train.augment_brightness = config.get_bool("train.brightness");
  train.deterministic = config.get_bool("train.deterministic");
  train.stop_mae = config.get_double("train.stop_mae");
  train.stop_fbeta = config.get_double("train.stop_fbeta");
  train.stop_check_every = config.get_int("train.stop_check_every");
  return train;
}

GenConfig gen_config_from(const KeyValueConfig& config) {
  GenConfig gen;
  gen.size = config.get_int("data.size");
  gen.min_objects = config.get_int("gen.min_objects");
  gen.max_objects = config.get_int("gen.max_objects");
  gen.texture_amplitude = config.get_double("gen.texture");
  gen.depth_noise = config.get_double("gen.depth_noise");
  gen.min_area_frac = config.get_double("gen.min_area");
  gen.max_area_frac = config.get_double("gen.max_area");
  gen.camouflage = config.get_double("gen.camouflage");
  return gen;
}

}  // namespace casgnn
