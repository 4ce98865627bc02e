#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pseudocorr/pipeline.hpp"
#include "pseudocorr/sphere.hpp"

namespace pseudocorr {

enum class ConfigType { kInt, kUInt, kReal, kBool, kString };

struct ConfigKey {
  std::string name;
  ConfigType type;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its type and default.
const std::vector<ConfigKey>& config_schema();

std::uint64_t fnv1a64(std::string_view bytes);

/// Flat key = value configuration over the schema defaults. Lines are
/// `key = value`; '#' starts a comment.
class Config {
 public:
  Config();

  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  /// Type-checked assignment; unknown keys are rejected.
  void set(const std::string& key, const std::string& value);
  bool is_default(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  /// Sorted key=value lines of every key, defaults included.
  std::string canonical() const;
  std::uint64_t hash() const { return fnv1a64(canonical()); }

 private:
  const std::string& raw(const std::string& key, ConfigType type) const;
  std::map<std::string, std::string> values_;
};

SynthConfig synth_config(const Config& c);
TrainConfig train_config(const Config& c);
AdapterShape adapter_shape(const Config& c, int in_channels);
/// Stage flags (chaining, filter, sphere) come from the `labels.*` keys.
LabelConfig label_config(const Config& c);
SoftArgmaxParams eval_params(const Config& c);
SphereTrainConfig sphere_train_config(const Config& c);
std::vector<int> sphere_hidden_layers(const Config& c);
AblationConfig ablation_config(const Config& c);

}  // namespace pseudocorr
