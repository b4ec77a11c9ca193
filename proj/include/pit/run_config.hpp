// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pit/config.hpp"
#include "pit/model.hpp"
#include "pit/scoring.hpp"
#include "pit/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pit {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ScoringConfig scoring;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path labels_path;
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint_path;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

// Every recognised dotted key, in a stable order.
const std::vector<ConfigKey>& run_config_keys();

// Starts from defaults and applies every key of kv. Unknown keys and malformed
// values raise ConfigError.
RunConfig run_config_from(const KeyValueConfig& kv);
void apply(const KeyValueConfig& kv, RunConfig& cfg);
KeyValueConfig to_key_values(const RunConfig& cfg);

// FNV-1a over the model, train and scoring keys, as 16 hex digits.
std::string config_fingerprint(const RunConfig& cfg);

std::string format_double(double v);
std::string to_string(Projection mode);
Projection projection_from_string(const std::string& name);

}  // namespace pit
