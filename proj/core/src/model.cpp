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

#include "dhce/model.hpp"

#include <algorithm>
#include <random>

#include "dhce/errors.hpp"

namespace dhce::model {

using num::Tensor;
using num::Var;

std::string to_string(OutputActivation a) {
  return a == OutputActivation::kSoftmax ? "softmax" : "sigmoid";
}

OutputActivation parse_output_activation(const std::string& s) {
  if (s == "softmax") return OutputActivation::kSoftmax;
  if (s == "sigmoid") return OutputActivation::kSigmoid;
  throw ConfigError("output_activation must be 'softmax' or 'sigmoid', got '" + s + "'");
}

void HyperParams::validate() const {
  if (d < 1) throw ConfigError("d must be >= 1");
  if (!(eps_clip > 0.0 && eps_clip < 1e-3)) throw ConfigError("eps_clip must be in (0, 1e-3)");
  if (chronic_window < 1) throw ConfigError("chronic_window must be >= 1");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ManifestEntry> manifest(const ModelDims& m) {
  const std::size_t d = m.d, c = m.vocab, e = m.event_dim;
  return {
      {"embeddings", c, d},
      {"chronic_context.W", d, d},
      {"acute_context.W", d, d},
      {"transfer.W_q", d, d},
      {"transfer.W_k", d, d},
      {"transfer.W_v", d, d},
      {"gru.W_z", d, d},
      {"gru.U_z", d, d},
      {"gru.b_z", 1, d},
      {"gru.W_r", d, d},
      {"gru.U_r", d, d},
      {"gru.b_r", 1, d},
      {"gru.W_h", d, d},
      {"gru.U_h", d, d},
      {"gru.b_h", 1, d},
      {"visit_attention.P", d, d},
      {"visit_attention.w", d, 1},
      {"event_attention.P", e, e},
      {"event_attention.w", e, 1},
      {"event_attention.W_out", e, d},
      {"event_attention.default", 1, d},
      {"gate.W_e", d, d},
      {"gate.W_v", d, d},
      {"gate.b_f", 1, d},
      {"output.W_y", d, c},
      {"output.b_y", 1, c},
  };
}

namespace {

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot != std::string::npos && name.compare(dot + 1, 2, "b_") == 0;
}

}  // namespace

ModelParameters ModelParameters::initialize(const ModelDims& dims, double init_scale,
                                            std::uint64_t seed) {
  if (dims.vocab == 0 || dims.d == 0 || dims.event_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-init_scale, init_scale);
  ModelParameters p;
  p.dims_ = dims;
  for (const ManifestEntry& m : manifest(dims)) {
    Tensor t(m.rows, m.cols);
    if (!is_bias(m.name)) {
      for (double& v : t.data()) v = u(rng);
    }
    p.set_.add(m.name, std::move(t));
  }
  return p;
}

ModelParameters ModelParameters::from_set(const ModelDims& dims, num::ParameterSet set) {
  const auto expected = manifest(dims);
  if (set.size() != expected.size()) {
    throw DataError("parameter manifest has " + std::to_string(set.size()) + " entries, expected " +
                    std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Tensor& t = set.value(i);
    if (set.name(i) != expected[i].name || t.rows() != expected[i].rows ||
        t.cols() != expected[i].cols) {
      throw DataError("parameter " + std::to_string(i) + " is '" + set.name(i) + "' " +
                      t.shape_string() + ", expected '" + expected[i].name + "' " +
                      std::to_string(expected[i].rows) + "x" + std::to_string(expected[i].cols));
    }
  }
  ModelParameters p;
  p.dims_ = dims;
  p.set_ = std::move(set);
  return p;
}

Bound::Bound(num::Tape& tape, const num::ParameterSet& set) : tape_(&tape) {
  if (set.size() != kSlotCount) throw NumericError("parameter set does not match the model manifest");
  for (std::size_t i = 0; i < kSlotCount; ++i) vars_[i] = tape.parameter(set, i);
}

// ---------------------------------------------------------------------------
// Building blocks

Var embed_codes(const Bound& p, std::span<const std::size_t> codes) {
  const Var& table = p[Slot::kEmbeddings];
  for (std::size_t c : codes) {
    if (c >= table.rows()) {
      throw DataError("code index " + std::to_string(c) + " out of range for vocabulary of " +
                      std::to_string(table.rows()));
    }
  }
  return num::gather_rows(table, codes);
}

Tensor incidence_tensor(const hypergraph::VisitHypergraph& g) {
  Tensor t(g.n_nodes(), g.n_edges());
  for (std::size_t r = 0; r < g.n_nodes(); ++r) {
    for (std::size_t e = 0; e < g.n_edges(); ++e) t(r, e) = g.incident(r, e) ? 1.0 : 0.0;
  }
  return t;
}

Var hyper_mean(const Var& node_reps, const Tensor& incidence) {
  if (incidence.rows() != node_reps.rows()) {
    throw NumericError("incidence " + incidence.shape_string() + " does not match " +
                       std::to_string(node_reps.rows()) + " node representations");
  }
  const std::size_t n = incidence.rows(), e = incidence.cols();
  // edge_mean = De^-1 H^T, node_mean = Dv^-1 H
  Tensor edge_mean(e, n), node_mean(n, e);
  for (std::size_t j = 0; j < e; ++j) {
    double deg = 0.0;
    for (std::size_t i = 0; i < n; ++i) deg += incidence(i, j);
    if (deg == 0.0) throw NumericError("hyperedge " + std::to_string(j) + " has no member");
    for (std::size_t i = 0; i < n; ++i) edge_mean(j, i) = incidence(i, j) / deg;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < e; ++j) deg += incidence(i, j);
    if (deg == 0.0) continue;
    for (std::size_t j = 0; j < e; ++j) node_mean(i, j) = incidence(i, j) / deg;
  }
  num::Tape& tape = *node_reps.tape();
  Var edges = num::matmul(tape.constant(std::move(edge_mean)), node_reps);
  return num::matmul(tape.constant(std::move(node_mean)), edges);
}

Var hyper_context(const Var& node_reps, const Tensor& incidence, const Var& transform) {
  return num::tanh(num::matmul(hyper_mean(node_reps, incidence), transform));
}

AttentionResult transfer_attention(const Var& previous, const Var& current, const Bound& p) {
  if (previous.rows() == 0) {
    throw NumericError("transfer attention needs a previous visit; skip it on the first visit");
  }
  if (current.rows() == 0) throw NumericError("transfer attention needs at least one query");
  return scaled_dot_attention(num::matmul(current, p[Slot::kTransferQuery]),
                              num::matmul(previous, p[Slot::kTransferKey]),
                              num::matmul(previous, p[Slot::kTransferValue]));
}

GruWeights GruWeights::from(const Bound& p) {
  return {p[Slot::kGruWz], p[Slot::kGruUz], p[Slot::kGruBz], p[Slot::kGruWr], p[Slot::kGruUr],
          p[Slot::kGruBr], p[Slot::kGruWh], p[Slot::kGruUh], p[Slot::kGruBh]};
}

Var gru_step(const Var& x, const Var& h, const GruWeights& w) {
  if (x.rows() != h.rows() || x.cols() != w.w_z.rows() || h.cols() != w.u_z.rows()) {
    throw NumericError("gru_step shape mismatch: x " + x.value().shape_string() + ", h " +
                       h.value().shape_string() + ", W " + w.w_z.value().shape_string());
  }
  using namespace num;
  Var z = sigmoid(add(add(matmul(x, w.w_z), matmul(h, w.u_z)), w.b_z));
  Var r = sigmoid(add(add(matmul(x, w.w_r), matmul(h, w.u_r)), w.b_r));
  Var cand = tanh(add(add(matmul(x, w.w_h), matmul(mul(r, h), w.u_h)), w.b_h));
  // (1 - z) * h + z * cand  ==  h + z * (cand - h)
  return add(h, mul(z, sub(cand, h)));
}

namespace {

// Positions of `subset` (ascending) inside `nodes` (ascending).
std::vector<std::size_t> rows_of(const std::vector<std::size_t>& nodes,
                                 const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> rows;
  rows.reserve(subset.size());
  for (std::size_t code : subset) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), code);
    if (it == nodes.end() || *it != code) throw NumericError("subgraph node missing from visit");
    rows.push_back(static_cast<std::size_t>(it - nodes.begin()));
  }
  return rows;
}

// n x k matrix placing row j of a k-row block at row rows[j].
Tensor scatter_matrix(std::size_t n, const std::vector<std::size_t>& rows) {
  Tensor s(n, rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) s(rows[j], j) = 1.0;
  return s;
}

// Adds the subgraph context of `graph` onto the matching rows of `reps`.
std::pair<Var, Var> add_subgraph_context(const Var& reps, const Var& embeddings,
                                         const std::vector<std::size_t>& nodes,
                                         const hypergraph::VisitHypergraph& graph,
                                         const Var& transform) {
  const std::vector<std::size_t> rows = rows_of(nodes, graph.nodes());
  Var members = num::gather_rows(embeddings, rows);
  Var ctx = hyper_context(members, incidence_tensor(graph), transform);
  Var scattered = num::matmul(reps.tape()->constant(scatter_matrix(nodes.size(), rows)), ctx);
  return {num::add(reps, scattered), ctx};
}

}  // namespace

VisitTrace forward_visit(const hypergraph::DynamicEntry& entry, const VisitTrace* previous,
                         const Bound& p) {
  num::Tape& tape = p.tape();
  VisitTrace tr;
  tr.nodes = entry.full.nodes();
  tr.embeddings = embed_codes(p, tr.nodes);

  Var reps = tr.embeddings;
  if (!entry.subgraphs.chronic.empty()) {
    auto [r, ctx] = add_subgraph_context(reps, tr.embeddings, tr.nodes, entry.subgraphs.chronic,
                                         p[Slot::kChronicContext]);
    reps = r;
    tr.chronic_context = ctx;
  }
  if (!entry.subgraphs.acute.empty()) {
    auto [r, ctx] = add_subgraph_context(reps, tr.embeddings, tr.nodes, entry.subgraphs.acute,
                                         p[Slot::kAcuteContext]);
    reps = r;
    tr.acute_context = ctx;
  }
  tr.node_reps = reps;

  if (previous != nullptr) {
    AttentionResult att = transfer_attention(previous->transfer_output, reps, p);
    tr.transfer = att.output;
    tr.transfer_weights = att.weights;
  } else {
    tr.transfer = tape.constant(Tensor(tr.nodes.size(), reps.cols()));
  }
  tr.transfer_output = gru_step(reps, tr.transfer, GruWeights::from(p));
  tr.visit_rep = num::max_over_rows(tr.transfer_output);
  return tr;
}

AttentionResult visit_attention(const Var& visit_reps, const Bound& p) {
  if (visit_reps.rows() == 0) throw NumericError("visit attention over an empty sequence");
  return additive_attention(visit_reps, p[Slot::kVisitProj], p[Slot::kVisitContext]);
}

Fusion fuse_predict(const Var& o_v, const Var& o_e, const Bound& p, const HyperParams& hp) {
  if (o_v.rows() != 1 || o_e.rows() != 1 || o_v.cols() != o_e.cols()) {
    throw NumericError("fuse_predict expects two 1xd vectors, got " + o_v.value().shape_string() +
                       " and " + o_e.value().shape_string());
  }
  using namespace num;
  Fusion f;
  f.gate = sigmoid(add(add(matmul(o_e, p[Slot::kGateWe]), matmul(o_v, p[Slot::kGateWv])),
                       p[Slot::kGateBias]));
  // F * O_v + (1 - F) * O_e  ==  O_e + F * (O_v - O_e)
  f.fused = add(o_e, mul(f.gate, sub(o_v, o_e)));
  f.logits = add(matmul(f.fused, p[Slot::kOutputW]), p[Slot::kOutputBias]);
  f.y_hat = hp.output_activation == OutputActivation::kSoftmax ? softmax_rows(f.logits)
                                                               : sigmoid(f.logits);
  return f;
}

Var sequence_loss(std::span<const Var> predictions, std::span<const hypergraph::MultiHot> targets,
                  double eps_clip) {
  if (predictions.empty()) throw NumericError("sequence_loss needs at least one prediction");
  if (predictions.size() != targets.size()) {
    throw NumericError("sequence_loss: " + std::to_string(predictions.size()) +
                       " predictions for " + std::to_string(targets.size()) + " targets");
  }
  num::Tape& tape = *predictions.front().tape();
  std::vector<Var> terms;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Var& yhat = predictions[i];
    if (yhat.rows() != 1 || yhat.cols() != targets[i].size()) {
      throw NumericError("prediction " + yhat.value().shape_string() + " does not match target of " +
                         std::to_string(targets[i].size()) + " codes");
    }
    Tensor y(1, targets[i].size()), not_y(1, targets[i].size());
    for (std::size_t c = 0; c < targets[i].size(); ++c) {
      y(0, c) = targets[i].test(c) ? 1.0 : 0.0;
      not_y(0, c) = 1.0 - y(0, c);
    }
    Var clipped = num::clamp(yhat, eps_clip, 1.0 - eps_clip);
    Var pos = num::mul(num::log(clipped), tape.constant(std::move(y)));
    Var neg = num::mul(num::log(num::shift(num::negate(clipped), 1.0)), tape.constant(std::move(not_y)));
    terms.push_back(num::sum_all(num::add(pos, neg)));
  }
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = num::add(total, terms[i]);
  return num::scale(total, -1.0 / static_cast<double>(terms.size()));
}

// ---------------------------------------------------------------------------
// Patients

PreparedPatient prepare_patient(const ehr::PatientRecord& patient,
                                const ehr::DiseaseVocabulary& vocab,
                                const events::TextEncoder& encoder, std::size_t chronic_window) {
  if (patient.visits.empty()) throw DataError("patient '" + patient.patient_id + "' has no visits");
  PreparedPatient out;
  out.patient_id = patient.patient_id;
  out.visit_codes = hypergraph::visit_code_indices(patient, vocab);
  for (const auto& codes : out.visit_codes) {
    out.visit_hots.push_back(hypergraph::MultiHot::from_indices(vocab.size(), codes));
  }
  out.dynamic = hypergraph::build_dynamic_hypergraph(out.visit_codes, vocab.size(), chronic_window);
  for (const ehr::Visit& v : patient.visits) {
    out.events.push_back(events::encode_visit_events(v.events, encoder));
  }
  return out;
}

ForwardTrace forward_patient(const PreparedPatient& patient, const Bound& p, const HyperParams& hp,
                             PrefixMode mode) {
  const std::size_t T = patient.visit_count();
  if (mode == PrefixMode::kTraining && T < 2) {
    throw DataError("patient '" + patient.patient_id + "' needs at least 2 visits for training");
  }
  if (T == 0) throw DataError("patient '" + patient.patient_id + "' has no visits");
  const std::size_t history = mode == PrefixMode::kTraining ? T - 1 : T;

  const events::EventAggregationParams event_params{p[Slot::kEventProj], p[Slot::kEventContext],
                                                    p[Slot::kEventOutput], p[Slot::kEventDefault]};
  ForwardTrace trace;
  trace.visits.reserve(history);
  std::vector<Var> reps;
  for (std::size_t t = 0; t < history; ++t) {
    const VisitTrace* prev = t == 0 ? nullptr : &trace.visits.back();
    trace.visits.push_back(forward_visit(patient.dynamic[t], prev, p));
    reps.push_back(trace.visits.back().visit_rep);
    if (mode == PrefixMode::kFullHistory && t + 1 < history) continue;

    PrefixTrace pre;
    pre.length = t + 1;
    AttentionResult att = visit_attention(num::concat_rows(reps), p);
    pre.visit_weights = att.weights;
    pre.o_v = att.output;
    pre.events = events::aggregate_events(p.tape(), patient.events[t], event_params);
    pre.fusion = fuse_predict(pre.o_v, pre.events.o_e, p, hp);
    trace.prefixes.push_back(std::move(pre));
  }
  return trace;
}

Var patient_loss(const PreparedPatient& patient, const Bound& p, const HyperParams& hp,
                 ForwardTrace* trace_out) {
  ForwardTrace trace = forward_patient(patient, p, hp, PrefixMode::kTraining);
  std::vector<Var> preds;
  std::vector<hypergraph::MultiHot> targets;
  for (const PrefixTrace& pre : trace.prefixes) {
    preds.push_back(pre.fusion.y_hat);
    targets.push_back(patient.visit_hots[pre.length]);
  }
  Var loss = sequence_loss(preds, targets, hp.eps_clip);
  if (trace_out != nullptr) *trace_out = std::move(trace);
  return loss;
}

Tensor predict_scores(const ModelParameters& params, const PreparedPatient& patient,
                      const HyperParams& hp) {
  num::Tape tape(false);
  Bound bound(tape, params.set());
  ForwardTrace trace = forward_patient(patient, bound, hp, PrefixMode::kFullHistory);
  return trace.prefixes.back().fusion.y_hat.value();
}

std::vector<Tensor> predict_prefix_scores(const ModelParameters& params,
                                          const PreparedPatient& patient, const HyperParams& hp) {
  num::Tape tape(false);
  Bound bound(tape, params.set());
  ForwardTrace trace = forward_patient(patient, bound, hp, PrefixMode::kTraining);
  std::vector<Tensor> out;
  for (const PrefixTrace& pre : trace.prefixes) out.push_back(pre.fusion.y_hat.value());
  return out;
}

}  // namespace dhce::model
