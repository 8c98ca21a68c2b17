#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "magicvo/data.hpp"
#include "magicvo/network.hpp"
#include "magicvo/synth.hpp"
#include "magicvo/training.hpp"

// Flat key=value run configuration. Every key has a default; a config file
// and then command-line flags override it.
namespace magicvo::config {

struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Every accepted key in a fixed order.
const std::vector<KeyInfo>& known_keys();

class RunConfig {
 public:
  RunConfig();

  /// Lines of `key = value`; '#' starts a comment. Unknown keys and
  /// malformed lines raise ConfigError naming the source and line.
  void parse_text(std::string_view text, const std::string& source);
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  /// True when a file or flag supplied the key.
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  /// Every key, one per line, in known_keys() order. Loading it back gives
  /// the same configuration.
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

/// Model from model.* keys: the preset, then any explicit size overrides.
net::ModelConfig model_config(const RunConfig& cfg);
/// True when any model.* key was given explicitly.
bool model_overridden(const RunConfig& cfg);
train::TrainConfig train_config(const RunConfig& cfg);
data::ScaleMode scale_mode(const RunConfig& cfg);
/// Specs for synth.count sequences; synth.path "mixed" alternates line and arc
/// paths with randomized motion.
std::vector<synth::SynthSpec> synth_specs(const RunConfig& cfg);

}  // namespace magicvo::config
