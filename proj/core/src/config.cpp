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

#include "dhce/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "dhce/errors.hpp"

namespace dhce::harness {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& key, const std::string& value) {
  const auto colon = value.find(':');
  if (colon == std::string::npos) {
    const auto n = parse_number<std::size_t>(key, value);
    return {n, n};
  }
  return {parse_number<std::size_t>(key, value.substr(0, colon)),
          parse_number<std::size_t>(key, value.substr(colon + 1))};
}

std::string fmt_range(std::pair<std::size_t, std::size_t> r) {
  return std::to_string(r.first) + ":" + std::to_string(r.second);
}

struct Field {
  const char* name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define DHCE_STRING_FIELD(key, member)                                   \
  Field {                                                                \
    key, [](TrainConfig& c, const std::string& v) { c.member = v; },     \
        [](const TrainConfig& c) { return std::string(c.member); }       \
  }
#define DHCE_NUMBER_FIELD(key, member, type)                                      \
  Field {                                                                         \
    key, [](TrainConfig& c, const std::string& v) {                               \
      c.member = parse_number<type>(key, v);                                      \
    },                                                                            \
        [](const TrainConfig& c) {                                                \
          if constexpr (std::is_floating_point_v<type>) return fmt_double(c.member); \
          else return std::to_string(c.member);                                   \
        }                                                                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DHCE_STRING_FIELD("data", data),
      DHCE_STRING_FIELD("vocab", vocab),
      DHCE_NUMBER_FIELD("synth_patients", synth.n_patients, std::size_t),
      DHCE_NUMBER_FIELD("synth_vocab", synth.vocab_size, std::size_t),
      Field{"synth_visits",
            [](TrainConfig& c, const std::string& v) {
              c.synth.visits_per_patient = parse_range("synth_visits", v);
            },
            [](const TrainConfig& c) { return fmt_range(c.synth.visits_per_patient); }},
      Field{"synth_codes",
            [](TrainConfig& c, const std::string& v) {
              c.synth.codes_per_visit = parse_range("synth_codes", v);
            },
            [](const TrainConfig& c) { return fmt_range(c.synth.codes_per_visit); }},
      DHCE_NUMBER_FIELD("synth_persistence", synth.chronic_persistence, double),
      Field{"synth_rules",
            [](TrainConfig& c, const std::string& v) { c.synth.rules = parse_rules(v); },
            [](const TrainConfig& c) { return format_rules(c.synth.rules); }},
      DHCE_NUMBER_FIELD("synth_random_rules", synth_random_rules, std::size_t),
      DHCE_NUMBER_FIELD("synth_rule_prob", synth_rule_prob, double),
      DHCE_NUMBER_FIELD("synth_event_noise", synth.event_noise, double),
      DHCE_NUMBER_FIELD("synth_seed", synth.seed, std::uint64_t),
      Field{"split",
            [](TrainConfig& c, const std::string& v) {
              std::array<double, 3> r{};
              std::size_t start = 0;
              for (std::size_t i = 0; i < 3; ++i) {
                const auto stop = i < 2 ? v.find(',', start) : v.size();
                if (stop == std::string::npos) {
                  throw ConfigError("config key 'split': expected three comma-separated ratios");
                }
                r[i] = parse_number<double>("split", trim(v.substr(start, stop - start)));
                start = stop + 1;
              }
              c.split = r;
            },
            [](const TrainConfig& c) {
              return fmt_double(c.split[0]) + "," + fmt_double(c.split[1]) + "," +
                     fmt_double(c.split[2]);
            }},
      DHCE_NUMBER_FIELD("split_seed", split_seed, std::uint64_t),
      DHCE_NUMBER_FIELD("d", hyper.d, std::size_t),
      DHCE_NUMBER_FIELD("lr", adam.lr, double),
      DHCE_NUMBER_FIELD("beta1", adam.beta1, double),
      DHCE_NUMBER_FIELD("beta2", adam.beta2, double),
      DHCE_NUMBER_FIELD("adam_eps", adam.eps, double),
      DHCE_NUMBER_FIELD("epochs", epochs, std::size_t),
      DHCE_NUMBER_FIELD("batch_size", batch_size, std::size_t),
      DHCE_NUMBER_FIELD("max_steps", max_steps, std::size_t),
      DHCE_NUMBER_FIELD("seed", seed, std::uint64_t),
      Field{"output_activation",
            [](TrainConfig& c, const std::string& v) {
              c.hyper.output_activation = model::parse_output_activation(v);
            },
            [](const TrainConfig& c) { return model::to_string(c.hyper.output_activation); }},
      DHCE_NUMBER_FIELD("eps_clip", hyper.eps_clip, double),
      DHCE_NUMBER_FIELD("init_scale", hyper.init_scale, double),
      DHCE_NUMBER_FIELD("chronic_window", hyper.chronic_window, std::size_t),
      Field{"encoder",
            [](TrainConfig& c, const std::string& v) {
              if (v == "hashing") {
                c.encoder.kind = events::EncoderSpec::Kind::kHashing;
              } else if (v == "remote") {
                c.encoder.kind = events::EncoderSpec::Kind::kRemote;
              } else {
                throw ConfigError("config key 'encoder': expected hashing or remote, got '" + v +
                                  "'");
              }
            },
            [](const TrainConfig& c) {
              return std::string(c.encoder.kind == events::EncoderSpec::Kind::kHashing ? "hashing"
                                                                                       : "remote");
            }},
      DHCE_NUMBER_FIELD("encoder_dim", encoder.dim, std::size_t),
      DHCE_NUMBER_FIELD("encoder_seed", encoder.seed, std::uint64_t),
      DHCE_STRING_FIELD("encoder_endpoint", encoder.endpoint),
      DHCE_NUMBER_FIELD("encoder_timeout_ms", encoder.timeout_ms, int),
      DHCE_NUMBER_FIELD("encoder_retries", encoder.retries, int),
      DHCE_STRING_FIELD("checkpoint", checkpoint),
      DHCE_NUMBER_FIELD("patience", patience, std::size_t),
      DHCE_NUMBER_FIELD("threads", threads, std::size_t),
      DHCE_STRING_FIELD("log", log),
  };
  return table;
}

#undef DHCE_STRING_FIELD
#undef DHCE_NUMBER_FIELD

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  double total = 0.0;
  for (double r : split) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (!(split[0] > 0.0) || !(total > 0.0)) throw ConfigError("split needs a positive train ratio");
  if (encoder.kind == events::EncoderSpec::Kind::kRemote && encoder.endpoint.empty()) {
    throw ConfigError("encoder=remote needs encoder_endpoint");
  }
  if (encoder.dim < 1) throw ConfigError("encoder_dim must be >= 1");
  hyper.validate();
  if (data.empty()) synth.validate();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.emplace_back(f.name);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.name) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig config;
  for (const auto& [k, v] : parse_key_values(in)) set_config_value(config, k, v);
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.name) + "=" + f.get(config) + "\n";
  return out;
}

std::vector<ehr::ComorbidityRule> parse_rules(const std::string& text) {
  std::vector<ehr::ComorbidityRule> rules;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto gt = item.find('>');
    const auto colon = item.find(':', gt == std::string::npos ? 0 : gt);
    if (gt == std::string::npos || colon == std::string::npos) {
      throw ConfigError("rule '" + item + "': expected trigger>induced:probability");
    }
    ehr::ComorbidityRule r;
    r.trigger = parse_number<std::size_t>("synth_rules", trim(item.substr(0, gt)));
    r.induced = parse_number<std::size_t>("synth_rules", trim(item.substr(gt + 1, colon - gt - 1)));
    r.probability = parse_number<double>("synth_rules", trim(item.substr(colon + 1)));
    rules.push_back(r);
  }
  return rules;
}

std::string format_rules(const std::vector<ehr::ComorbidityRule>& rules) {
  std::string out;
  for (const auto& r : rules) {
    if (!out.empty()) out += ";";
    out += std::to_string(r.trigger) + ">" + std::to_string(r.induced) + ":" + fmt_double(r.probability);
  }
  return out;
}

}  // namespace dhce::harness
