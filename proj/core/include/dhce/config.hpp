// Copyright 2026 The DHCE Authors.
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

#ifndef DHCE_CONFIG_HPP_
#define DHCE_CONFIG_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "dhce/ehr.hpp"
#include "dhce/events.hpp"
#include "dhce/model.hpp"
#include "dhce/num/optim.hpp"

namespace dhce::harness {

/// Everything a training run depends on. Read from a flat key=value file;
/// every key can be overridden by a command-line flag of the same name.
struct TrainConfig {
  // Data: a JSONL path, or a synthetic dataset when empty.
  std::string data;
  std::string vocab;
  ehr::SynthConfig synth;
  std::size_t synth_random_rules = 0;
  double synth_rule_prob = 0.9;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;

  model::HyperParams hyper;
  num::AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0 = no limit
  std::uint64_t seed = 0;

  events::EncoderSpec encoder;

  std::string checkpoint;
  std::size_t patience = 10;
  std::size_t threads = 1;
  std::string log;

  void validate() const;
};

// Keys accepted by set_config_value, in documentation order.
const std::vector<std::string>& config_keys();

// Throws ConfigError on an unknown key or an unparsable value.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

// Lines are `key = value`; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in);

TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);

// key=value lines that parse back to an equal configuration.
std::string format_config(const TrainConfig& config);

// "trigger>induced:p;..." with integer code indices.
std::vector<ehr::ComorbidityRule> parse_rules(const std::string& text);
std::string format_rules(const std::vector<ehr::ComorbidityRule>& rules);

}  // namespace dhce::harness

#endif  // DHCE_CONFIG_HPP_
