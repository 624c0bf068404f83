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

#include <string>
#include <vector>

#include "benchmark/benchmark.h"
#include "dhce/ehr.hpp"
#include "dhce/events.hpp"
#include "dhce/model.hpp"

namespace {

struct Fixture {
  dhce::ehr::Dataset data;
  std::vector<dhce::model::PreparedPatient> patients;
  dhce::model::ModelParameters params;
  dhce::model::HyperParams hyper;

  Fixture(std::size_t vocab, std::size_t d) {
    dhce::ehr::SynthConfig cfg;
    cfg.n_patients = 32;
    cfg.vocab_size = vocab;
    cfg.visits_per_patient = {4, 8};
    cfg.codes_per_visit = {3, 8};
    cfg.rules = dhce::ehr::random_rules(vocab, 20, 0.9, 1);
    data = dhce::ehr::generate_synthetic(cfg);
    dhce::events::HashingEncoder enc(64, 0);
    for (const auto& p : data.patients) {
      patients.push_back(dhce::model::prepare_patient(p, *data.vocabulary, enc, 1));
    }
    hyper.d = d;
    params = dhce::model::ModelParameters::initialize({vocab, d, 64}, hyper.init_scale, 7);
  }
};

void BM_PatientForward(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  std::size_t i = 0;
  for (auto _ : state) {
    dhce::num::Tape tape(false);
    dhce::model::Bound bound(tape, fx.params.set());
    benchmark::DoNotOptimize(
        dhce::model::patient_loss(fx.patients[i++ % fx.patients.size()], bound, fx.hyper));
  }
}
BENCHMARK(BM_PatientForward)->Args({100, 32})->Args({100, 64})->Args({1000, 64});

void BM_PatientForwardBackward(benchmark::State& state) {
  const Fixture fx(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  std::size_t i = 0;
  for (auto _ : state) {
    dhce::num::Tape tape;
    dhce::model::Bound bound(tape, fx.params.set());
    auto loss = dhce::model::patient_loss(fx.patients[i++ % fx.patients.size()], bound, fx.hyper);
    benchmark::DoNotOptimize(dhce::num::backward(tape, loss, fx.params.set()));
  }
}
BENCHMARK(BM_PatientForwardBackward)->Args({100, 32})->Args({100, 64})->Args({1000, 64});

void BM_HashingEncode(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> texts;
  for (int i = 0; i < 64; ++i) {
    texts.push_back("[CLS] lab [SEP] panel [SEP] D" + std::to_string(1000 + i) +
                    " [SEP] level [SEP] high");
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dhce::events::hashing_encode(texts, dim, 3));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(texts.size()));
}
BENCHMARK(BM_HashingEncode)->Arg(64)->Arg(768);

void BM_DynamicHypergraph(benchmark::State& state) {
  const Fixture fx(200, 8);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& p = fx.data.patients[i++ % fx.data.patients.size()];
    benchmark::DoNotOptimize(dhce::hypergraph::build_dynamic_hypergraph(p, *fx.data.vocabulary));
  }
}
BENCHMARK(BM_DynamicHypergraph);

}  // namespace
