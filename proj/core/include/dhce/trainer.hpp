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

#ifndef DHCE_TRAINER_HPP_
#define DHCE_TRAINER_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhce/checkpoint.hpp"
#include "dhce/config.hpp"
#include "dhce/ehr.hpp"
#include "dhce/metrics.hpp"
#include "dhce/model.hpp"
#include "dhce/num/optim.hpp"

namespace dhce::harness {

// Runs fn(i) for i in [0, n) on up to `threads` workers. If any call throws,
// the exception from the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct DataSplits {
  ehr::Dataset train;
  ehr::Dataset val;
  ehr::Dataset test;
};

// Loads `config.data` (or generates the synthetic dataset) and splits it.
ehr::Dataset build_dataset(const TrainConfig& config);
DataSplits build_splits(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;       // 1-based
  double train_loss = 0.0;     // mean per-patient loss seen during the epoch
  std::optional<double> val_p10;
  std::size_t steps = 0;       // optimizer steps so far
};

std::string format_epoch(const EpochRecord& record);

struct TrainResult {
  Checkpoint checkpoint;  // best validation precision@10, or the last state without a val split
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train_on(const ehr::Dataset& train_set, const ehr::Dataset& val_set,
                     const TrainConfig& config, const EpochCallback& on_epoch = {});

struct EvalReport {
  std::array<double, metrics::kReportedK.size()> precision{};  // aligned with kReportedK
  std::optional<double> mean_loss;                             // absent for the baseline
  std::size_t patients = 0;
  std::size_t predicted_visits = 0;

  double precision_at(std::size_t k) const;
};

std::string format_report(const EvalReport& report);

std::vector<model::PreparedPatient> prepare_dataset(const ehr::Dataset& dataset,
                                                    const ehr::DiseaseVocabulary& vocabulary,
                                                    const events::TextEncoder& encoder,
                                                    std::size_t chronic_window);

// Throws DataError listing every dataset code missing from `vocabulary`.
void check_vocabulary(const ehr::Dataset& dataset, const ehr::DiseaseVocabulary& vocabulary);

EvalReport evaluate_prepared(const model::ModelParameters& params, const model::HyperParams& hp,
                             std::span<const model::PreparedPatient> patients,
                             std::size_t threads = 1);
EvalReport evaluate(const Checkpoint& checkpoint, const ehr::Dataset& dataset,
                    std::size_t threads = 1);

// Ranks every code by its number of visit occurrences in `train_set`.
EvalReport frequency_baseline(const ehr::Dataset& train_set, const ehr::Dataset& test_set);

struct RankedCode {
  std::string code;
  double score = 0.0;
};

std::vector<RankedCode> predict_next(const Checkpoint& checkpoint,
                                     const ehr::PatientRecord& patient,
                                     const events::TextEncoder& encoder);
std::vector<RankedCode> predict_next(const Checkpoint& checkpoint,
                                     const ehr::PatientRecord& patient);

/// Small seeded batch used to check the full model's gradients.
struct GradCheckFixture {
  model::ModelParameters params;
  model::HyperParams hyper;
  std::vector<model::PreparedPatient> patients;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  model::OutputActivation activation = model::OutputActivation::kSoftmax;
  std::size_t patients = 3;
  std::size_t vocab_size = 20;
  std::size_t d = 16;
  std::size_t event_dim = 8;
  std::pair<std::size_t, std::size_t> visits{3, 4};
  std::pair<std::size_t, std::size_t> codes{2, 4};
  double init_scale = 1.0;
};

GradCheckFixture make_gradcheck_fixture(const GradCheckOptions& options);

num::GradCheckReport run_gradcheck(const GradCheckFixture& fixture, double eps = 1e-5);

}  // namespace dhce::harness

#endif  // DHCE_TRAINER_HPP_
