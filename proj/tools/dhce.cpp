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

// dhce: generate synthetic EHR data, train, evaluate and inspect the model.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dhce/checkpoint.hpp"
#include "dhce/config.hpp"
#include "dhce/errors.hpp"
#include "dhce/hypergraph.hpp"
#include "dhce/trainer.hpp"
#include "json.hpp"

namespace {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

Level g_level = Level::kInfo;

void log_line(Level level, const std::string& msg) {
  if (level > g_level) return;
  static const char* const kNames[] = {"error", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", kNames[static_cast<int>(level)], msg.c_str());
}

void init_log_level() {
  const char* env = std::getenv("DHCE_LOG");
  if (env == nullptr) return;
  const std::string v = env;
  if (v == "error") {
    g_level = Level::kError;
  } else if (v == "info") {
    g_level = Level::kInfo;
  } else if (v == "debug") {
    g_level = Level::kDebug;
  } else {
    throw dhce::ConfigError("DHCE_LOG must be error, info or debug (got '" + v + "')");
  }
}

using Overrides = std::map<std::string, std::string>;

// Registers `--key value` for every config key.
void add_config_flags(CLI::App* cmd, Overrides& overrides, const std::string& prefix = "") {
  for (const std::string& key : dhce::harness::config_keys()) {
    if (!prefix.empty() && key.rfind(prefix, 0) != 0) continue;
    cmd->add_option_function<std::string>(
           "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; },
           "config key " + key)
        ->group("Config overrides");
  }
}

dhce::harness::TrainConfig resolve_config(const std::string& path, const Overrides& overrides) {
  dhce::harness::TrainConfig config;
  if (!path.empty()) config = dhce::harness::load_config(path);
  for (const auto& [k, v] : overrides) dhce::harness::set_config_value(config, k, v);
  return config;
}

int run_gen(const std::string& config_path, const Overrides& overrides, const std::string& out,
            const std::string& vocab_out) {
  const auto config = resolve_config(config_path, overrides);
  const dhce::ehr::Dataset ds = dhce::harness::build_dataset(config);
  if (out.empty() || out == "-") {
    dhce::ehr::write_dataset(ds, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw dhce::DataError("cannot open " + out + " for writing");
    dhce::ehr::write_dataset(ds, f);
  }
  if (!vocab_out.empty()) {
    std::ofstream f(vocab_out);
    if (!f) throw dhce::DataError("cannot open " + vocab_out + " for writing");
    dhce::ehr::write_vocabulary(*ds.vocabulary, f);
  }
  log_line(Level::kInfo, "generated " + std::to_string(ds.patients.size()) + " patients");
  return 0;
}

int run_train(const std::string& config_path, const Overrides& overrides) {
  using namespace dhce::harness;
  const TrainConfig config = resolve_config(config_path, overrides);
  config.validate();
  log_line(Level::kDebug, "resolved config:\n" + format_config(config));

  std::ofstream log_file;
  if (!config.log.empty()) {
    log_file.open(config.log, std::ios::trunc);
    if (!log_file) throw dhce::DataError("cannot open log file " + config.log);
  }
  const DataSplits splits = build_splits(config);
  log_line(Level::kInfo, "split train=" + std::to_string(splits.train.patients.size()) +
                        " val=" + std::to_string(splits.val.patients.size()) +
                        " test=" + std::to_string(splits.test.patients.size()));

  const TrainResult result =
      train_on(splits.train, splits.val, config, [&](const EpochRecord& r) {
        const std::string line = format_epoch(r);
        std::cout << line << '\n' << std::flush;
        if (log_file) log_file << line << '\n' << std::flush;
      });
  std::cout << "best_epoch=" << result.best_epoch << '\n';
  if (!config.checkpoint.empty()) log_line(Level::kInfo, "checkpoint written to " + config.checkpoint);

  if (!splits.test.patients.empty()) {
    const EvalReport test = evaluate(result.checkpoint, splits.test, config.threads);
    const EvalReport base = frequency_baseline(splits.train, splits.test);
    std::cout << "[test]\n" << format_report(test) << "[frequency_baseline]\n"
              << format_report(base);
  }
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, std::size_t threads) {
  const auto ck = dhce::harness::load_checkpoint(checkpoint);
  const auto loaded = dhce::ehr::load_dataset(data);
  if (loaded.dropped_count > 0) {
    log_line(Level::kInfo, "dropped " + std::to_string(loaded.dropped_count) +
                          " patients with fewer than 2 visits");
  }
  std::cout << dhce::harness::format_report(
      dhce::harness::evaluate(ck, loaded.dataset, threads));
  return 0;
}

int run_predict(const std::string& checkpoint, const std::string& patient_file, std::size_t top) {
  const auto ck = dhce::harness::load_checkpoint(checkpoint);
  const auto encoder = dhce::events::make_encoder(ck.encoder);
  std::ifstream in(patient_file);
  if (!in) throw dhce::DataError("cannot open patient file " + patient_file);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto patient = dhce::ehr::parse_patient_line(line, line_no);
    const auto ranked = dhce::harness::predict_next(ck, patient, *encoder);
    nlohmann::ordered_json out;
    out["patient_id"] = patient.patient_id;
    out["ranking"] = nlohmann::ordered_json::array();
    const std::size_t n = top == 0 ? ranked.size() : std::min(top, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
      out["ranking"].push_back({{"code", ranked[i].code}, {"score", ranked[i].score}});
    }
    std::cout << out.dump() << '\n';
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, double tolerance, const std::string& activation) {
  dhce::harness::GradCheckOptions options;
  options.seed = seed;
  options.activation = dhce::model::parse_output_activation(activation);
  const auto fixture = dhce::harness::make_gradcheck_fixture(options);
  const auto report = dhce::harness::run_gradcheck(fixture);
  bool ok = report.max_rel_error < tolerance;
  for (const auto& e : report.per_parameter) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-28s coords=%-5zu max_rel_error=%.3e max_abs_grad=%.3e",
                  e.name.c_str(), e.coordinates, e.max_rel_error, e.max_abs_analytic);
    std::cout << buf << '\n';
  }
  std::printf("loss=%.17g noise_floor=%.3e max_resolved_rel_error=%.6e\n", report.value,
              report.noise_floor, report.max_resolved_rel_error);
  std::printf("max_rel_error=%.6e tolerance=%.1e %s\n", report.max_rel_error, tolerance,
              ok ? "PASS" : "FAIL");
  if (!ok) throw dhce::NumericError("gradient check failed");
  return 0;
}

int run_inspect(const std::string& data, const std::string& patient_id, std::size_t window) {
  const auto loaded = dhce::ehr::load_dataset(data);
  for (const auto& p : loaded.dataset.patients) {
    if (p.patient_id != patient_id) continue;
    const auto& vocab = *loaded.dataset.vocabulary;
    std::cout << "patient " << p.patient_id << " (" << p.visits.size() << " visits)\n";
    std::cout << dhce::hypergraph::format_dynamic_hypergraph(
        dhce::hypergraph::build_dynamic_hypergraph(p, vocab, window), vocab);
    return 0;
  }
  throw dhce::DataError("patient '" + patient_id + "' not found in " + data);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic hypergraph and clinical event model for next-visit diagnosis prediction"};
  app.require_subcommand(1);

  Overrides gen_overrides;
  std::string gen_config, gen_out, gen_vocab_out;
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset as JSONL");
  gen->add_option("--config", gen_config, "key=value config file");
  gen->add_option("--out", gen_out, "output path (default stdout)");
  gen->add_option("--vocab-out", gen_vocab_out, "also write the vocabulary");
  add_config_flags(gen, gen_overrides, "synth_");

  Overrides train_overrides;
  std::string train_config;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", train_config, "key=value config file");
  add_config_flags(train, train_overrides);

  std::string eval_checkpoint, eval_data;
  std::size_t eval_threads = 1;
  auto* eval = app.add_subcommand("eval", "Score next-visit predictions on a dataset");
  eval->add_option("--checkpoint", eval_checkpoint)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--threads", eval_threads)->check(CLI::PositiveNumber);

  std::string pred_checkpoint, pred_file;
  std::size_t pred_top = 0;
  auto* predict = app.add_subcommand("predict", "Rank codes for each patient's next visit");
  predict->add_option("--checkpoint", pred_checkpoint)->required();
  predict->add_option("--patient-file", pred_file, "JSONL, one patient per line")->required();
  predict->add_option("--top", pred_top, "codes to print per patient (0 = all)");

  std::uint64_t gc_seed = 0;
  double gc_tolerance = 1e-4;
  std::string gc_activation = "softmax";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--tolerance", gc_tolerance);
  gradcheck->add_option("--activation", gc_activation)->check(CLI::IsMember({"softmax", "sigmoid"}));

  std::string insp_data, insp_patient;
  std::size_t insp_window = 1;
  auto* inspect = app.add_subcommand("inspect", "Print a patient's visit hypergraphs");
  inspect->add_option("--data", insp_data)->required();
  inspect->add_option("--patient-id", insp_patient)->required();
  inspect->add_option("--chronic-window", insp_window)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    init_log_level();
    if (*gen) return run_gen(gen_config, gen_overrides, gen_out, gen_vocab_out);
    if (*train) return run_train(train_config, train_overrides);
    if (*eval) return run_eval(eval_checkpoint, eval_data, eval_threads);
    if (*predict) return run_predict(pred_checkpoint, pred_file, pred_top);
    if (*gradcheck) return run_gradcheck(gc_seed, gc_tolerance, gc_activation);
    if (*inspect) return run_inspect(insp_data, insp_patient, insp_window);
  } catch (const dhce::ConfigError& e) {
    log_line(Level::kError, e.what());
    return 1;
  } catch (const dhce::DataError& e) {
    log_line(Level::kError, e.what());
    return 2;
  } catch (const dhce::EncoderError& e) {
    log_line(Level::kError, e.what());
    return 2;
  } catch (const dhce::NumericError& e) {
    log_line(Level::kError, e.what());
    return 3;
  }
  return 1;
}
