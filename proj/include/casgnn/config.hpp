#pragma once

#include <string>
#include <vector>

#include "casgnn/data.hpp"
#include "casgnn/train.hpp"

namespace casgnn {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
};

/// Plain-text key=value configuration with '#' comments. Every key is
/// namespaced and must appear in the registry (unknown keys are errors);
/// lookups fall back default -> file -> explicit override, so CLI flags can
/// sit on top.
class KeyValueConfig {
 public:
  static const std::vector<ConfigKey>& registry();

  KeyValueConfig() = default;
  static KeyValueConfig from_file(const std::string& path);

  /// Flag layer (highest precedence). The key must be registered.
  void override_value(const std::string& key, const std::string& value);

  /// Profile layer (lowest precedence, replaces the registry default).
  void set_default(const std::string& key, const std::string& value);

  bool is_overridden(const std::string& key) const;

  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

 private:
  static void require_known(const std::string& key);

  std::vector<std::pair<std::string, std::string>> file_values_;
  std::vector<std::pair<std::string, std::string>> overrides_;
  std::vector<std::pair<std::string, std::string>> profile_defaults_;
};

/// Applies the paper-protocol profile (256x256 inputs, batch 8, lr 1e-4,
/// 40 epochs) as defaults; desk-scale values stay unless the profile is
/// requested.
void apply_paper_profile(KeyValueConfig& config);

ModelConfig model_config_from(const KeyValueConfig& config);
TrainConfig train_config_from(const KeyValueConfig& config);
GenConfig gen_config_from(const KeyValueConfig& config);

}  // namespace casgnn
