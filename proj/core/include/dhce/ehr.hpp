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

#ifndef DHCE_EHR_HPP_
#define DHCE_EHR_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dhce::ehr {

/// Ordered set of disease codes with a dense 0-based index.
class DiseaseVocabulary {
 public:
  DiseaseVocabulary() = default;
  explicit DiseaseVocabulary(std::vector<std::string> codes);

  // Appends `code` if unseen; returns its index either way.
  std::size_t intern(const std::string& code);
  std::optional<std::size_t> find(std::string_view code) const;
  std::size_t index_of(std::string_view code) const;  // throws DataError if unknown
  const std::string& code(std::size_t index) const { return codes_.at(index); }
  const std::vector<std::string>& codes() const noexcept { return codes_; }
  std::size_t size() const noexcept { return codes_.size(); }

  friend bool operator==(const DiseaseVocabulary& a, const DiseaseVocabulary& b) {
    return a.codes_ == b.codes_;
  }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ClinicalEvent {
  std::string type;
  std::vector<std::pair<std::string, std::string>> features;

  friend bool operator==(const ClinicalEvent&, const ClinicalEvent&) = default;
};

struct Visit {
  // Unique codes in input order.
  std::vector<std::string> codes;
  std::vector<ClinicalEvent> events;

  friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// Validated collection of patients. The vocabulary is shared so that splits
/// of one dataset index codes identically.
struct Dataset {
  std::shared_ptr<const DiseaseVocabulary> vocabulary;
  std::vector<std::string> event_types;
  std::vector<PatientRecord> patients;
};

struct LoadResult {
  Dataset dataset;
  std::size_t dropped_count = 0;  // patients with fewer than 2 visits
};

// Parses one patient JSON line. `line_number` is used in error messages.
// Does not enforce the 2-visit minimum.
PatientRecord parse_patient_line(std::string_view line, std::size_t line_number);

// Loads line-delimited patient JSON. The vocabulary is first-seen order unless
// `vocabulary_path` names a sidecar file with one code per line.
LoadResult load_dataset(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& vocabulary_path = std::nullopt);
LoadResult load_dataset(std::istream& in, std::shared_ptr<const DiseaseVocabulary> fixed_vocabulary);

std::string patient_to_json(const PatientRecord& patient);
void write_dataset(const Dataset& dataset, std::ostream& out);
void write_vocabulary(const DiseaseVocabulary& vocabulary, std::ostream& out);
DiseaseVocabulary read_vocabulary(const std::filesystem::path& path);

// Throws DataError if any visit is empty or any code/event type is not
// registered in the dataset.
void validate(const Dataset& dataset);

struct ComorbidityRule {
  std::size_t trigger = 0;
  std::size_t induced = 0;
  double probability = 0.0;
};

struct SynthConfig {
  std::size_t n_patients = 100;
  std::size_t vocab_size = 50;
  std::pair<std::size_t, std::size_t> visits_per_patient{2, 6};
  std::pair<std::size_t, std::size_t> codes_per_visit{2, 5};
  double chronic_persistence = 0.5;
  std::vector<ComorbidityRule> rules;
  double event_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Name of synthetic code `index`, e.g. "D0007".
std::string synthetic_code(std::size_t index);

// `count` rules over distinct random trigger/induced pairs, all with
// probability `p`.
std::vector<ComorbidityRule> random_rules(std::size_t vocab_size, std::size_t count, double p,
                                          std::uint64_t seed);

Dataset generate_synthetic(const SynthConfig& config);

// Patient-level split into (train, val, test). Deterministic in `seed`.
std::array<Dataset, 3> split_dataset(const Dataset& dataset, std::array<double, 3> ratios,
                                     std::uint64_t seed);

}  // namespace dhce::ehr

#endif  // DHCE_EHR_HPP_
