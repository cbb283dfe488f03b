// Copyright 2026 The POEM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Config resolution and the experiment commands behind `poem run`.
//
// A run directory always contains config.json (written before anything else),
// metrics.jsonl, summary.csv and checkpoints/. Re-running from config.json
// with one thread reproduces summary.csv byte for byte.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "poem/episodes.hpp"
#include "poem/gridworld.hpp"
#include "poem/trainer.hpp"

namespace poem {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// bench-po, bench-full, gridworld-train, gridworld-recon, diag.
const std::vector<std::string>& experiment_commands();

/// Every key with its default value; "desk" or "paper".
nlohmann::json preset_config(const std::string& preset);

/// Sets a dotted key ("train.steps=500"). The value is parsed as JSON when
/// possible, otherwise taken as a string. Unknown keys and type changes throw.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Merges `overlay` into `config`; every overlay key must already exist.
void merge_config(nlohmann::json& config, const nlohmann::json& overlay, const std::string& prefix = "");

struct RunSpec {
  std::string command;
  std::string preset = "desk";
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::filesystem::path out_dir;
  bool emit_svg = false;
};

/// Preset, then config file, then overrides, then explicit seed/threads; validated.
nlohmann::json resolve_config(const RunSpec& spec);

/// Checks ranges and enum strings; throws ConfigError naming the key.
void validate_config(const nlohmann::json& config);

// Typed views of a resolved config.
SamplerConfig sampler_config(const nlohmann::json& config, bool eval_split);
GridEpisodeConfig grid_config(const nlohmann::json& config);
EncoderConfig encoder_config(const nlohmann::json& config, std::size_t input_width);
TrainConfig train_config(const nlohmann::json& config, Objective objective, bool gridworld);
DecoderTrainConfig decoder_train_config(const nlohmann::json& config);

/// Runs `config["command"]` into `out_dir`; returns the summary as JSON.
/// Throws ConfigError, IoError or TrainingAborted.
nlohmann::json run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir, bool emit_svg = false,
                              std::ostream* log = nullptr);

/// Two-series line plot (step on x) as a standalone SVG document.
std::string line_plot_svg(const std::string& title, const std::vector<std::string>& names,
                          const std::vector<std::vector<std::pair<double, double>>>& series);

}  // namespace poem
