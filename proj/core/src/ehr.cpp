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

#include "dhce/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <unordered_set>

#include "dhce/errors.hpp"
#include "json.hpp"

namespace dhce::ehr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// DiseaseVocabulary

DiseaseVocabulary::DiseaseVocabulary(std::vector<std::string> codes) {
  for (auto& c : codes) {
    if (c.empty()) throw DataError("vocabulary contains an empty code");
    if (find(c)) throw DataError("vocabulary contains duplicate code '" + c + "'");
    intern(c);
  }
}

std::size_t DiseaseVocabulary::intern(const std::string& code) {
  auto [it, inserted] = index_.try_emplace(code, codes_.size());
  if (inserted) codes_.push_back(code);
  return it->second;
}

std::optional<std::size_t> DiseaseVocabulary::find(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t DiseaseVocabulary::index_of(std::string_view code) const {
  if (auto i = find(code)) return *i;
  throw DataError("unknown code '" + std::string(code) + "'");
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ": " + msg);
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         std::size_t line, const char* where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(line, std::string("unknown key '") + key + "' in " + where);
  }
}

ClinicalEvent parse_event(const json& e, std::size_t line) {
  if (!e.is_object()) fail(line, "event must be an object");
  reject_unknown_keys(e, {"type", "features"}, line, "event");
  if (!e.contains("type") || !e["type"].is_string()) fail(line, "event needs a string 'type'");
  ClinicalEvent ev;
  ev.type = e["type"].get<std::string>();
  if (ev.type.empty()) fail(line, "event type must be nonempty");
  if (e.contains("features")) {
    const json& fs = e["features"];
    if (!fs.is_array()) fail(line, "event 'features' must be an array");
    for (const json& f : fs) {
      if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_string()) {
        fail(line, "each feature must be a [name, value] pair of strings");
      }
      ev.features.emplace_back(f[0].get<std::string>(), f[1].get<std::string>());
    }
  }
  return ev;
}

}  // namespace

PatientRecord parse_patient_line(std::string_view text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(line, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(line, "patient must be a JSON object");
  reject_unknown_keys(j, {"patient_id", "visits"}, line, "patient");
  if (!j.contains("patient_id") || !j["patient_id"].is_string()) {
    fail(line, "patient needs a string 'patient_id'");
  }
  if (!j.contains("visits") || !j["visits"].is_array()) fail(line, "patient needs a 'visits' array");

  PatientRecord p;
  p.patient_id = j["patient_id"].get<std::string>();
  if (p.patient_id.empty()) fail(line, "patient_id must be nonempty");
  for (const json& v : j["visits"]) {
    if (!v.is_object()) fail(line, "visit must be an object");
    reject_unknown_keys(v, {"codes", "events"}, line, "visit");
    if (!v.contains("codes") || !v["codes"].is_array()) fail(line, "visit needs a 'codes' array");
    Visit visit;
    std::unordered_set<std::string> seen;
    for (const json& c : v["codes"]) {
      if (!c.is_string() || c.get<std::string>().empty()) {
        fail(line, "codes must be nonempty strings");
      }
      auto code = c.get<std::string>();
      if (seen.insert(code).second) visit.codes.push_back(std::move(code));
    }
    if (visit.codes.empty()) {
      fail(line, "patient '" + p.patient_id + "' has a visit with an empty code set");
    }
    if (v.contains("events")) {
      if (!v["events"].is_array()) fail(line, "visit 'events' must be an array");
      for (const json& e : v["events"]) visit.events.push_back(parse_event(e, line));
    }
    p.visits.push_back(std::move(visit));
  }
  return p;
}

LoadResult load_dataset(std::istream& in, std::shared_ptr<const DiseaseVocabulary> fixed) {
  LoadResult result;
  auto vocab = std::make_shared<DiseaseVocabulary>();
  if (fixed) *vocab = *fixed;
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> types_seen;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    PatientRecord p = parse_patient_line(text, line);
    if (!ids.insert(p.patient_id).second) fail(line, "duplicate patient_id '" + p.patient_id + "'");
    if (p.visits.size() < 2) {
      ++result.dropped_count;
      continue;
    }
    for (const Visit& v : p.visits) {
      for (const std::string& c : v.codes) {
        if (fixed) {
          if (!vocab->find(c)) fail(line, "code '" + c + "' is not in the vocabulary file");
        } else {
          vocab->intern(c);
        }
      }
      for (const ClinicalEvent& e : v.events) {
        if (types_seen.insert(e.type).second) result.dataset.event_types.push_back(e.type);
      }
    }
    result.dataset.patients.push_back(std::move(p));
  }
  result.dataset.vocabulary = std::move(vocab);
  return result;
}

LoadResult load_dataset(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& vocabulary_path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  std::shared_ptr<const DiseaseVocabulary> fixed;
  if (vocabulary_path) fixed = std::make_shared<DiseaseVocabulary>(read_vocabulary(*vocabulary_path));
  return load_dataset(in, std::move(fixed));
}

DiseaseVocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> codes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) codes.push_back(line);
  }
  return DiseaseVocabulary(std::move(codes));
}

// ---------------------------------------------------------------------------
// Writing

std::string patient_to_json(const PatientRecord& p) {
  ordered_json j;
  j["patient_id"] = p.patient_id;
  j["visits"] = ordered_json::array();
  for (const Visit& v : p.visits) {
    ordered_json jv;
    jv["codes"] = v.codes;
    jv["events"] = ordered_json::array();
    for (const ClinicalEvent& e : v.events) {
      ordered_json je;
      je["type"] = e.type;
      je["features"] = ordered_json::array();
      for (const auto& [name, value] : e.features) je["features"].push_back({name, value});
      jv["events"].push_back(std::move(je));
    }
    j["visits"].push_back(std::move(jv));
  }
  return j.dump();
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  for (const PatientRecord& p : dataset.patients) out << patient_to_json(p) << '\n';
}

void write_vocabulary(const DiseaseVocabulary& vocabulary, std::ostream& out) {
  for (const std::string& c : vocabulary.codes()) out << c << '\n';
}

void validate(const Dataset& dataset) {
  if (!dataset.vocabulary) throw DataError("dataset has no vocabulary");
  std::unordered_set<std::string> types(dataset.event_types.begin(), dataset.event_types.end());
  for (const PatientRecord& p : dataset.patients) {
    for (const Visit& v : p.visits) {
      if (v.codes.empty()) throw DataError("patient '" + p.patient_id + "' has an empty visit");
      for (const std::string& c : v.codes) {
        if (!dataset.vocabulary->find(c)) {
          throw DataError("patient '" + p.patient_id + "' uses unknown code '" + c + "'");
        }
      }
      for (const ClinicalEvent& e : v.events) {
        if (e.type.empty() || !types.contains(e.type)) {
          throw DataError("patient '" + p.patient_id + "' uses unregistered event type '" +
                          e.type + "'");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SynthConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must be in [0,1]");
  };
  if (n_patients == 0) throw ConfigError("n_patients must be positive");
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (visits_per_patient.first < 1 || visits_per_patient.first > visits_per_patient.second) {
    throw ConfigError("visits_per_patient must satisfy 1 <= min <= max");
  }
  if (codes_per_visit.first < 1 || codes_per_visit.first > codes_per_visit.second) {
    throw ConfigError("codes_per_visit must satisfy 1 <= min <= max");
  }
  if (vocab_size < codes_per_visit.second) {
    throw ConfigError("vocab_size (" + std::to_string(vocab_size) +
                      ") is smaller than the maximum codes per visit (" +
                      std::to_string(codes_per_visit.second) + ")");
  }
  prob(chronic_persistence, "chronic_persistence");
  prob(event_noise, "event_noise");
  for (const ComorbidityRule& r : rules) {
    prob(r.probability, "rule probability");
    if (r.trigger >= vocab_size || r.induced >= vocab_size) {
      throw ConfigError("rule code index out of range for vocab_size " + std::to_string(vocab_size));
    }
  }
}

std::string synthetic_code(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "D" + digits;
}

std::vector<ComorbidityRule> random_rules(std::size_t vocab_size, std::size_t count, double p,
                                          std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("random rules need vocab_size >= 2");
  if (count > vocab_size * (vocab_size - 1)) throw ConfigError("too many rules for vocab_size");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, vocab_size - 1);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<ComorbidityRule> rules;
  while (rules.size() < count) {
    const std::size_t a = pick(rng), b = pick(rng);
    if (a == b || !used.insert({a, b}).second) continue;
    rules.push_back({a, b, p});
  }
  return rules;
}

namespace {

constexpr std::array<const char*, 3> kEventTypes = {"lab", "rx", "proc"};
constexpr std::array<const char*, 3> kSubjectNames = {"panel", "drug", "procedure"};
constexpr std::array<const char*, 3> kLevels = {"low", "normal", "high"};

std::vector<ClinicalEvent> synth_events(const std::vector<std::size_t>& codes,
                                        const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_events(1, 3);
  std::uniform_int_distribution<std::size_t> type_pick(0, kEventTypes.size() - 1);
  std::uniform_int_distribution<std::size_t> code_pick(0, codes.size() - 1);
  std::uniform_int_distribution<std::size_t> vocab_pick(0, cfg.vocab_size - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<ClinicalEvent> events;
  const std::size_t n = n_events(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = type_pick(rng);
    std::size_t subject = codes[code_pick(rng)];
    if (u(rng) < cfg.event_noise) subject = vocab_pick(rng);
    ClinicalEvent e;
    e.type = kEventTypes[t];
    e.features.emplace_back(kSubjectNames[t], synthetic_code(subject));
    e.features.emplace_back("level", kLevels[subject % kLevels.size()]);
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> n_visits(cfg.visits_per_patient.first,
                                                      cfg.visits_per_patient.second);
  std::uniform_int_distribution<std::size_t> n_codes(cfg.codes_per_visit.first,
                                                     cfg.codes_per_visit.second);
  std::uniform_int_distribution<std::size_t> vocab_pick(0, cfg.vocab_size - 1);

  std::vector<std::string> codes(cfg.vocab_size);
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) codes[i] = synthetic_code(i);

  Dataset ds;
  ds.vocabulary = std::make_shared<DiseaseVocabulary>(codes);
  ds.event_types.assign(kEventTypes.begin(), kEventTypes.end());

  const int width = std::max<int>(6, static_cast<int>(std::to_string(cfg.n_patients).size()));
  for (std::size_t pi = 0; pi < cfg.n_patients; ++pi) {
    PatientRecord p;
    std::string num = std::to_string(pi + 1);
    p.patient_id = "P" + std::string(width - num.size(), '0') + num;

    const std::size_t T = n_visits(rng);
    std::vector<std::size_t> prev;
    for (std::size_t t = 0; t < T; ++t) {
      std::set<std::size_t> current;
      if (t > 0) {
        for (std::size_t c : prev) {
          if (u(rng) < cfg.chronic_persistence) current.insert(c);
        }
        for (const ComorbidityRule& r : cfg.rules) {
          if (std::binary_search(prev.begin(), prev.end(), r.trigger) && u(rng) < r.probability) {
            current.insert(r.induced);
          }
        }
      }
      const std::size_t target = n_codes(rng);
      while (current.size() < target) current.insert(vocab_pick(rng));

      std::vector<std::size_t> visit_codes(current.begin(), current.end());
      Visit v;
      for (std::size_t c : visit_codes) v.codes.push_back(codes[c]);
      v.events = synth_events(visit_codes, cfg, rng);
      p.visits.push_back(std::move(v));
      prev = std::move(visit_codes);
    }
    ds.patients.push_back(std::move(p));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

std::array<Dataset, 3> split_dataset(const Dataset& dataset, std::array<double, 3> ratios,
                                     std::uint64_t seed) {
  double total = 0.0;
  std::size_t nonzero = 0;
  for (double r : ratios) {
    if (r < 0.0 || !std::isfinite(r)) throw ConfigError("split ratios must be non-negative");
    total += r;
    nonzero += r > 0.0 ? 1 : 0;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const std::size_t n = dataset.patients.size();
  if (n < nonzero) {
    throw DataError("cannot split " + std::to_string(n) + " patients into " +
                    std::to_string(nonzero) + " nonempty parts");
  }

  // Largest-remainder apportionment; every nonzero ratio gets at least one.
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (frac[i] > frac[best]) best = i;
    }
    ++counts[best];
    frac[best] = -1.0;
    ++assigned;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (ratios[i] > 0.0 && counts[i] == 0) {
      auto donor = std::max_element(counts.begin(), counts.end()) - counts.begin();
      --counts[donor];
      ++counts[i];
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::array<Dataset, 3> parts;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    parts[i].vocabulary = dataset.vocabulary;
    parts[i].event_types = dataset.event_types;
    std::vector<std::size_t> members(order.begin() + pos, order.begin() + pos + counts[i]);
    std::sort(members.begin(), members.end());
    for (std::size_t m : members) parts[i].patients.push_back(dataset.patients[m]);
    pos += counts[i];
  }
  return parts;
}

}  // namespace dhce::ehr
