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

#ifndef DHCE_EVENTS_HPP_
#define DHCE_EVENTS_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhce/attention.hpp"
#include "dhce/ehr.hpp"
#include "dhce/num/tape.hpp"

namespace dhce::events {

struct EventText {
  std::string text;
  std::string event_type;
};

// "[CLS] type [SEP] name1 [SEP] value1 [SEP] name2 ..." with single spaces.
EventText serialize_event(const ehr::ClinicalEvent& event);

/// How an encoder was configured; persisted in checkpoints so that a saved
/// model can rebuild the same encoder.
struct EncoderSpec {
  enum class Kind { kHashing, kRemote };
  Kind kind = Kind::kHashing;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::string endpoint;
  int timeout_ms = 5000;
  int retries = 2;
};

/// Maps texts to fixed-width vectors. Outputs are treated as constants by the
/// model (never differentiated).
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  // One row per text, in input order.
  virtual num::Tensor encode(std::span<const std::string> texts) const = 0;
  virtual EncoderSpec spec() const = 0;
};

// Seeded 64-bit hash of a token.
std::uint64_t hash_token(std::string_view token, std::uint64_t seed);

// Signed feature hashing of whitespace tokens, L2-normalised per row. Empty
// texts map to zero rows.
num::Tensor hashing_encode(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed);

class HashingEncoder final : public TextEncoder {
 public:
  HashingEncoder(std::size_t dim, std::uint64_t seed);
  std::size_t dim() const override { return dim_; }
  num::Tensor encode(std::span<const std::string> texts) const override;
  EncoderSpec spec() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Client for an HTTP embedding service:
///   GET  /info   -> {"dim": int}
///   POST /encode {"texts": [...]} -> {"vectors": [[...], ...]}
/// The dimension is fetched once at construction.
class RemoteEncoder final : public TextEncoder {
 public:
  RemoteEncoder(std::string endpoint, int timeout_ms, int retries);
  std::size_t dim() const override { return dim_; }
  num::Tensor encode(std::span<const std::string> texts) const override;
  EncoderSpec spec() const override;

 private:
  std::string endpoint_;
  int timeout_ms_;
  int retries_;
  std::size_t dim_ = 0;
};

std::unique_ptr<TextEncoder> make_encoder(const EncoderSpec& spec);

/// One vector per event type present in a visit.
struct EventRepresentation {
  std::vector<std::string> types;  // first-appearance order
  num::Tensor vectors;             // types.size() x dim
};

// Serialises and encodes each event; events sharing a type are mean-pooled.
EventRepresentation encode_visit_events(std::span<const ehr::ClinicalEvent> events,
                                        const TextEncoder& encoder);

struct EventAggregationParams {
  num::Var proj;            // dim x dim attention projection
  num::Var context;         // dim x 1 attention context vector
  num::Var output;          // dim x d projection to model width
  num::Var default_vector;  // 1 x d, used when a visit has no events
};

struct EventAggregation {
  num::Var o_e;                    // 1 x d
  std::optional<num::Var> weights;  // absent for zero-event visits
};

// Attention over the per-type vectors followed by a linear projection.
EventAggregation aggregate_events(num::Tape& tape, const EventRepresentation& reps,
                                  const EventAggregationParams& params);

}  // namespace dhce::events

#endif  // DHCE_EVENTS_HPP_
