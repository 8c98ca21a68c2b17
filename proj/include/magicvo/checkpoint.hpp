#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "magicvo/data.hpp"
#include "magicvo/network.hpp"
#include "magicvo/training.hpp"

// Binary checkpoint; the byte layout is described in docs/checkpoint_format.md.
namespace magicvo::ckpt {

struct Checkpoint {
  net::ModelParams params;
  data::NormalizationStats stats;
  std::optional<train::OptimizerState> optimizer;
  std::map<std::string, std::string> metadata;  // free-form extras, e.g. epochs run
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws ParseError on a malformed file, a missing or misshapen parameter,
/// or an unknown entry.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::map<std::string, std::string> model_config_to_map(const net::ModelConfig& config);
net::ModelConfig model_config_from_map(const std::map<std::string, std::string>& values);

/// Throws ConfigError listing every field where `requested` differs from the
/// checkpoint's configuration.
void require_same_config(const net::ModelConfig& checkpoint, const net::ModelConfig& requested);

}  // namespace magicvo::ckpt
