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

#include "dhce/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "dhce/errors.hpp"

namespace dhce::harness {

using model::PreparedPatient;
using num::Gradients;
using num::Tape;
using num::Tensor;

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ehr::Dataset build_dataset(const TrainConfig& config) {
  if (!config.data.empty()) {
    std::optional<std::filesystem::path> vocab;
    if (!config.vocab.empty()) vocab = config.vocab;
    return ehr::load_dataset(config.data, vocab).dataset;
  }
  ehr::SynthConfig synth = config.synth;
  if (config.synth_random_rules > 0) {
    auto extra = ehr::random_rules(synth.vocab_size, config.synth_random_rules,
                                   config.synth_rule_prob, synth.seed);
    synth.rules.insert(synth.rules.end(), extra.begin(), extra.end());
  }
  return ehr::generate_synthetic(synth);
}

DataSplits build_splits(const TrainConfig& config) {
  auto parts = ehr::split_dataset(build_dataset(config), config.split, config.split_seed);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

std::string format_epoch(const EpochRecord& r) {
  char buf[160];
  if (r.val_p10) {
    std::snprintf(buf, sizeof(buf), "epoch=%zu steps=%zu train_loss=%.17g val_p10=%.17g", r.epoch,
                  r.steps, r.train_loss, *r.val_p10);
  } else {
    std::snprintf(buf, sizeof(buf), "epoch=%zu steps=%zu train_loss=%.17g val_p10=none", r.epoch,
                  r.steps, r.train_loss);
  }
  return buf;
}

std::vector<PreparedPatient> prepare_dataset(const ehr::Dataset& dataset,
                                             const ehr::DiseaseVocabulary& vocabulary,
                                             const events::TextEncoder& encoder,
                                             std::size_t chronic_window) {
  std::vector<PreparedPatient> out;
  out.reserve(dataset.patients.size());
  for (const auto& p : dataset.patients) {
    out.push_back(model::prepare_patient(p, vocabulary, encoder, chronic_window));
  }
  return out;
}

void check_vocabulary(const ehr::Dataset& dataset, const ehr::DiseaseVocabulary& vocabulary) {
  std::set<std::string> unknown;
  for (const auto& p : dataset.patients) {
    for (const auto& v : p.visits) {
      for (const auto& c : v.codes) {
        if (!vocabulary.find(c)) unknown.insert(c);
      }
    }
  }
  if (unknown.empty()) return;
  std::string list;
  for (const auto& c : unknown) list += (list.empty() ? "" : ", ") + c;
  throw DataError("dataset has " + std::to_string(unknown.size()) +
                  " code(s) unknown to the model vocabulary: " + list);
}

namespace {

struct PatientGrad {
  double loss = 0.0;
  Gradients grads;
};

PatientGrad patient_gradient(const PreparedPatient& patient, const num::ParameterSet& set,
                             const model::HyperParams& hp) {
  Tape tape;
  model::Bound bound(tape, set);
  num::Var loss;
  try {
    loss = model::patient_loss(patient, bound, hp);
  } catch (const NumericError& e) {
    throw NumericError("non-finite value for patient '" + patient.patient_id + "': " + e.what());
  }
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss for patient '" + patient.patient_id + "'");
  }
  return {value, num::backward(tape, loss, set)};
}

}  // namespace

TrainResult train_on(const ehr::Dataset& train_set, const ehr::Dataset& val_set,
                     const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.patients.empty()) throw DataError("training split is empty");
  if (!train_set.vocabulary) throw DataError("training set has no vocabulary");
  const ehr::DiseaseVocabulary& vocab = *train_set.vocabulary;
  check_vocabulary(val_set, vocab);

  auto encoder = events::make_encoder(config.encoder);
  const model::HyperParams& hp = config.hyper;
  const auto train_pp = prepare_dataset(train_set, vocab, *encoder, hp.chronic_window);
  const auto val_pp = prepare_dataset(val_set, vocab, *encoder, hp.chronic_window);

  const model::ModelDims dims{vocab.size(), hp.d, encoder->dim()};
  model::ModelParameters params =
      model::ModelParameters::initialize(dims, hp.init_scale, config.seed);
  num::AdamState adam = num::AdamState::for_params(params.set(), config.adam);

  TrainResult result;
  result.checkpoint.hyper = hp;
  result.checkpoint.vocabulary = vocab;
  result.checkpoint.event_types = train_set.event_types;
  result.checkpoint.encoder = config.encoder;
  result.checkpoint.encoder.dim = encoder->dim();
  result.checkpoint.params = params;

  std::optional<double> best_val;
  std::size_t since_best = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> order(train_pp.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (config.max_steps > 0 && steps >= config.max_steps) break;
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<PatientGrad> per(n);
      parallel_for(n, config.threads, [&](std::size_t i) {
        per[i] = patient_gradient(train_pp[order[start + i]], params.set(), hp);
      });
      Gradients total = std::move(per[0].grads);
      loss_sum += per[0].loss;
      for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t k = 0; k < total.size(); ++k) num::accumulate(total[k], per[i].grads[k]);
        loss_sum += per[i].loss;
      }
      loss_count += n;
      const double inv = 1.0 / static_cast<double>(n);
      for (Tensor& g : total) {
        for (double& x : g.data()) x *= inv;
      }
      num::adam_step(params.set(), total, adam);
      ++steps;
    }
    if (loss_count == 0) break;

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(loss_count);
    record.steps = steps;
    if (!val_pp.empty()) {
      record.val_p10 = evaluate_prepared(params, hp, val_pp, config.threads).precision_at(10);
    }
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (!record.val_p10) {
      result.checkpoint.params = params;
      result.best_epoch = epoch;
    } else if (!best_val || *record.val_p10 > *best_val) {
      best_val = record.val_p10;
      since_best = 0;
      result.checkpoint.params = params;
      result.best_epoch = epoch;
    } else if (++since_best >= config.patience) {
      break;
    }
    if (config.max_steps > 0 && steps >= config.max_steps) break;
  }
  result.steps = steps;
  if (!config.checkpoint.empty()) save_checkpoint(result.checkpoint, config.checkpoint);
  return result;
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  DataSplits splits = build_splits(config);
  return train_on(splits.train, splits.val, config, on_epoch);
}

double EvalReport::precision_at(std::size_t k) const {
  for (std::size_t i = 0; i < metrics::kReportedK.size(); ++i) {
    if (metrics::kReportedK[i] == k) return precision[i];
  }
  throw ConfigError("precision@" + std::to_string(k) + " is not reported");
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char buf[96];
  for (std::size_t i = 0; i < metrics::kReportedK.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "precision@%zu=%.17g\n", metrics::kReportedK[i],
                  r.precision[i]);
    out += buf;
  }
  if (r.mean_loss) {
    std::snprintf(buf, sizeof(buf), "mean_loss=%.17g\n", *r.mean_loss);
    out += buf;
  }
  out += "patients=" + std::to_string(r.patients) + "\n";
  out += "predicted_visits=" + std::to_string(r.predicted_visits) + "\n";
  return out;
}

EvalReport evaluate_prepared(const model::ModelParameters& params, const model::HyperParams& hp,
                             std::span<const PreparedPatient> patients, std::size_t threads) {
  if (patients.empty()) throw DataError("cannot evaluate an empty dataset");
  struct PerPatient {
    double loss = 0.0;
    std::vector<Tensor> scores;
  };
  std::vector<PerPatient> per(patients.size());
  parallel_for(patients.size(), threads, [&](std::size_t i) {
    Tape tape(false);
    model::Bound bound(tape, params.set());
    model::ForwardTrace trace;
    per[i].loss = model::patient_loss(patients[i], bound, hp, &trace).value()(0, 0);
    for (const auto& pre : trace.prefixes) per[i].scores.push_back(pre.fusion.y_hat.value());
  });

  metrics::PrecisionAccumulator acc;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    loss_sum += per[i].loss;
    for (std::size_t t = 0; t < per[i].scores.size(); ++t) {
      acc.add(per[i].scores[t].data(), patients[i].visit_hots[t + 1]);
    }
  }
  EvalReport report;
  for (std::size_t k = 0; k < report.precision.size(); ++k) report.precision[k] = acc.mean(k);
  report.mean_loss = loss_sum / static_cast<double>(patients.size());
  report.patients = patients.size();
  report.predicted_visits = acc.count();
  return report;
}

EvalReport evaluate(const Checkpoint& checkpoint, const ehr::Dataset& dataset,
                    std::size_t threads) {
  if (dataset.patients.empty()) throw DataError("cannot evaluate an empty dataset");
  check_vocabulary(dataset, checkpoint.vocabulary);
  auto encoder = events::make_encoder(checkpoint.encoder);
  const auto prepared = prepare_dataset(dataset, checkpoint.vocabulary, *encoder,
                                        checkpoint.hyper.chronic_window);
  return evaluate_prepared(checkpoint.params, checkpoint.hyper, prepared, threads);
}

EvalReport frequency_baseline(const ehr::Dataset& train_set, const ehr::Dataset& test_set) {
  if (test_set.patients.empty()) throw DataError("cannot evaluate an empty dataset");
  if (!train_set.vocabulary) throw DataError("training set has no vocabulary");
  const ehr::DiseaseVocabulary& vocab = *train_set.vocabulary;
  check_vocabulary(test_set, vocab);
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& p : train_set.patients) {
    for (const auto& v : p.visits) {
      for (const auto& c : v.codes) counts[vocab.index_of(c)] += 1.0;
    }
  }
  metrics::PrecisionAccumulator acc;
  for (const auto& p : test_set.patients) {
    const auto codes = hypergraph::visit_code_indices(p, vocab);
    for (std::size_t t = 1; t < codes.size(); ++t) {
      acc.add(counts, hypergraph::MultiHot::from_indices(vocab.size(), codes[t]));
    }
  }
  EvalReport report;
  for (std::size_t k = 0; k < report.precision.size(); ++k) report.precision[k] = acc.mean(k);
  report.patients = test_set.patients.size();
  report.predicted_visits = acc.count();
  return report;
}

std::vector<RankedCode> predict_next(const Checkpoint& checkpoint,
                                     const ehr::PatientRecord& patient,
                                     const events::TextEncoder& encoder) {
  const PreparedPatient prepared = model::prepare_patient(
      patient, checkpoint.vocabulary, encoder, checkpoint.hyper.chronic_window);
  const Tensor scores = model::predict_scores(checkpoint.params, prepared, checkpoint.hyper);
  std::vector<RankedCode> out;
  out.reserve(scores.cols());
  for (std::size_t idx : metrics::rank_codes(scores.data())) {
    out.push_back({checkpoint.vocabulary.code(idx), scores(0, idx)});
  }
  return out;
}

std::vector<RankedCode> predict_next(const Checkpoint& checkpoint,
                                     const ehr::PatientRecord& patient) {
  return predict_next(checkpoint, patient, *events::make_encoder(checkpoint.encoder));
}

GradCheckFixture make_gradcheck_fixture(const GradCheckOptions& o) {
  ehr::SynthConfig synth;
  synth.n_patients = o.patients;
  synth.vocab_size = o.vocab_size;
  synth.visits_per_patient = o.visits;
  synth.codes_per_visit = o.codes;
  synth.chronic_persistence = 0.7;
  synth.rules = ehr::random_rules(synth.vocab_size, 6, 0.9, o.seed);
  synth.seed = o.seed;
  ehr::Dataset ds = ehr::generate_synthetic(synth);
  // One event-free visit so the learned default event vector is exercised.
  ds.patients[0].visits[0].events.clear();

  GradCheckFixture fx;
  fx.hyper.d = o.d;
  fx.hyper.output_activation = o.activation;
  fx.hyper.init_scale = o.init_scale;
  const events::HashingEncoder encoder(o.event_dim, o.seed);
  fx.patients = prepare_dataset(ds, *ds.vocabulary, encoder, fx.hyper.chronic_window);
  fx.params = model::ModelParameters::initialize({ds.vocabulary->size(), fx.hyper.d, encoder.dim()},
                                                 fx.hyper.init_scale, o.seed);
  return fx;
}

num::GradCheckReport run_gradcheck(const GradCheckFixture& fx, double eps) {
  const num::LossFn loss = [&fx](Tape& tape, const num::ParameterSet& set) {
    model::Bound bound(tape, set);
    std::vector<num::Var> losses;
    for (const auto& p : fx.patients) losses.push_back(model::patient_loss(p, bound, fx.hyper));
    num::Var total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = num::add(total, losses[i]);
    return num::scale(total, 1.0 / static_cast<double>(losses.size()));
  };
  return num::grad_check(loss, fx.params.set(), eps);
}

}  // namespace dhce::harness
