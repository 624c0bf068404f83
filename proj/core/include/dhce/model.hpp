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

#ifndef DHCE_MODEL_HPP_
#define DHCE_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhce/attention.hpp"
#include "dhce/ehr.hpp"
#include "dhce/events.hpp"
#include "dhce/hypergraph.hpp"
#include "dhce/num/tape.hpp"

namespace dhce::model {

enum class OutputActivation { kSoftmax, kSigmoid };

std::string to_string(OutputActivation a);
OutputActivation parse_output_activation(const std::string& s);

struct HyperParams {
  std::size_t d = 64;
  OutputActivation output_activation = OutputActivation::kSoftmax;
  double eps_clip = 1e-12;
  std::size_t chronic_window = 1;
  double init_scale = 0.08;

  void validate() const;
};

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t d = 0;
  std::size_t event_dim = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Manifest order of every learnable tensor.
enum class Slot : std::size_t {
  kEmbeddings,
  kChronicContext,
  kAcuteContext,
  kTransferQuery,
  kTransferKey,
  kTransferValue,
  kGruWz,
  kGruUz,
  kGruBz,
  kGruWr,
  kGruUr,
  kGruBr,
  kGruWh,
  kGruUh,
  kGruBh,
  kVisitProj,
  kVisitContext,
  kEventProj,
  kEventContext,
  kEventOutput,
  kEventDefault,
  kGateWe,
  kGateWv,
  kGateBias,
  kOutputW,
  kOutputBias,
  kCount,
};

constexpr std::size_t kSlotCount = static_cast<std::size_t>(Slot::kCount);

struct ManifestEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

std::vector<ManifestEntry> manifest(const ModelDims& dims);

class ModelParameters {
 public:
  // Weights ~ U(-init_scale, init_scale), biases zero.
  static ModelParameters initialize(const ModelDims& dims, double init_scale, std::uint64_t seed);
  // Adopts `set` after checking names and shapes against the manifest.
  static ModelParameters from_set(const ModelDims& dims, num::ParameterSet set);

  const ModelDims& dims() const noexcept { return dims_; }
  const num::ParameterSet& set() const noexcept { return set_; }
  num::ParameterSet& set() noexcept { return set_; }
  const num::Tensor& operator[](Slot s) const { return set_.value(static_cast<std::size_t>(s)); }
  num::Tensor& operator[](Slot s) { return set_.value(static_cast<std::size_t>(s)); }

 private:
  ModelDims dims_;
  num::ParameterSet set_;
};

/// Parameters bound as leaves on one tape.
class Bound {
 public:
  Bound(num::Tape& tape, const num::ParameterSet& set);
  const num::Var& operator[](Slot s) const { return vars_[static_cast<std::size_t>(s)]; }
  num::Tape& tape() const { return *tape_; }

 private:
  num::Tape* tape_;
  std::array<num::Var, kSlotCount> vars_;
};

// Rows of the embedding table for `codes`.
num::Var embed_codes(const Bound& params, std::span<const std::size_t> codes);

num::Tensor incidence_tensor(const hypergraph::VisitHypergraph& graph);

// Two-stage mean: hyperedge = mean of member nodes, node = mean of incident
// hyperedges. Nodes without a hyperedge get a zero row.
num::Var hyper_mean(const num::Var& node_reps, const num::Tensor& incidence);
// tanh(hyper_mean(node_reps, incidence) * transform).
num::Var hyper_context(const num::Var& node_reps, const num::Tensor& incidence,
                       const num::Var& transform);

// Queries from the current visit's node representations, keys and values
// from the previous visit's transfer outputs.
AttentionResult transfer_attention(const num::Var& previous, const num::Var& current,
                                   const Bound& params);

struct GruWeights {
  num::Var w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
  static GruWeights from(const Bound& params);
};

// Row-wise GRU cell: each row of x (n x d) is paired with the same row of
// h_prev (n x d).
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   h~ = tanh(x W_h + (r * h) U_h + b_h)
//   h' = (1 - z) * h + z * h~
num::Var gru_step(const num::Var& x, const num::Var& h_prev, const GruWeights& w);

struct VisitTrace {
  std::vector<std::size_t> nodes;           // diagnosed codes, ascending
  num::Var embeddings;                      // n x d
  std::optional<num::Var> chronic_context;  // n_chronic x d
  std::optional<num::Var> acute_context;    // n_acute_graph x d
  num::Var node_reps;                       // n x d, embeddings + contexts
  num::Var transfer;                        // n x d, zeros on the first visit
  std::optional<num::Var> transfer_weights;  // n x m
  num::Var transfer_output;                 // n x d, GRU output per node
  num::Var visit_rep;                       // 1 x d, max over nodes
};

VisitTrace forward_visit(const hypergraph::DynamicEntry& entry, const VisitTrace* previous,
                         const Bound& params);

// Additive attention over the visit representations (T x d).
AttentionResult visit_attention(const num::Var& visit_reps, const Bound& params);

struct Fusion {
  num::Var gate;    // F
  num::Var fused;   // u
  num::Var logits;  // u W_y + b_y
  num::Var y_hat;   // activation(logits), unclipped
};

Fusion fuse_predict(const num::Var& o_v, const num::Var& o_e, const Bound& params,
                    const HyperParams& hp);

// Mean over predicted visits of the binary cross-entropy summed over codes.
// Predictions are clamped to [eps_clip, 1 - eps_clip] before the logs.
num::Var sequence_loss(std::span<const num::Var> predictions,
                       std::span<const hypergraph::MultiHot> targets, double eps_clip);

/// A patient with everything precomputed that does not depend on parameters.
struct PreparedPatient {
  std::string patient_id;
  std::vector<std::vector<std::size_t>> visit_codes;
  std::vector<hypergraph::MultiHot> visit_hots;
  hypergraph::DynamicHypergraph dynamic;
  std::vector<events::EventRepresentation> events;

  std::size_t visit_count() const noexcept { return visit_codes.size(); }
};

PreparedPatient prepare_patient(const ehr::PatientRecord& patient,
                                const ehr::DiseaseVocabulary& vocab,
                                const events::TextEncoder& encoder, std::size_t chronic_window);

struct PrefixTrace {
  std::size_t length = 0;  // number of history visits
  num::Var visit_weights;
  num::Var o_v;
  events::EventAggregation events;
  Fusion fusion;
};

struct ForwardTrace {
  std::vector<VisitTrace> visits;
  std::vector<PrefixTrace> prefixes;
};

enum class PrefixMode {
  kTraining,     // prefixes 1..T-1, each predicting the following visit
  kFullHistory,  // the single prefix 1..T, predicting visit T+1
};

ForwardTrace forward_patient(const PreparedPatient& patient, const Bound& params,
                             const HyperParams& hp, PrefixMode mode);

// Training loss of one patient: sequence_loss over all teacher-forced prefixes.
num::Var patient_loss(const PreparedPatient& patient, const Bound& params, const HyperParams& hp,
                      ForwardTrace* trace = nullptr);

// Scores for the visit after the full history (1 x |C|).
num::Tensor predict_scores(const ModelParameters& params, const PreparedPatient& patient,
                           const HyperParams& hp);

// Scores for the visit after each training prefix.
std::vector<num::Tensor> predict_prefix_scores(const ModelParameters& params,
                                               const PreparedPatient& patient,
                                               const HyperParams& hp);

}  // namespace dhce::model

#endif  // DHCE_MODEL_HPP_
