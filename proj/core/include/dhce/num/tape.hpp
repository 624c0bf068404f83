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

#ifndef DHCE_NUM_TAPE_HPP_
#define DHCE_NUM_TAPE_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhce/num/tensor.hpp"

namespace dhce::num {

/// Named, ordered collection of trainable tensors. The order of insertion is
/// the manifest order used by checkpoints and optimizers.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t element_count() const noexcept;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// One gradient tensor per parameter, aligned with ParameterSet order.
using Gradients = std::vector<Tensor>;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Local adjoint of a recorded op. Receives the upstream gradient of the
/// node's output and adds contributions into `grads` for its inputs via
/// Tape::accumulate_grad.
using BackwardFn =
    std::function<void(const Tape& tape, const Tensor& upstream, std::vector<Tensor>& grads)>;

/// Reverse-mode computation record. Nodes are appended in evaluation order, so
/// the node list is always topologically sorted. A tape built with
/// `record_gradients = false` stores forward values only.
class Tape {
 public:
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf bound to parameter `index` of `params`. Repeated calls for the same
  // index return the same node.
  Var parameter(const ParameterSet& params, std::size_t index);

  // Appends an op node. Exposed so callers can define custom ops; `inputs`
  // must refer to nodes already on this tape.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  // grads[id] += g, allocating a zero tensor on first touch.
  void accumulate_grad(std::vector<Tensor>& grads, std::size_t id, const Tensor& g) const;

 private:
  friend Gradients backward(const Tape&, const Var&, const ParameterSet&);

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<std::size_t> param;
  };

  bool record_;
  // deque: references returned by value() stay valid as nodes are appended.
  std::deque<Node> nodes_;
  std::vector<std::optional<std::size_t>> param_nodes_;
};

/// Reverse sweep from a 1x1 loss node. Returns one gradient per parameter of
/// `params`; parameters the loss does not reach get zero tensors.
Gradients backward(const Tape& tape, const Var& loss, const ParameterSet& params);

enum class Unary { kSigmoid, kTanh, kExp, kLog, kNegate };

// Differentiable ops. Binary element-wise ops accept equal shapes, or a right
// operand that is a 1xC row vector or an Rx1 column vector broadcast over the
// left operand.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var shift(const Var& a, double s);
Var map_unary(const Var& a, Unary f);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var negate(const Var& a);
Var softmax_rows(const Var& a);
// Column-wise maximum; the gradient goes to the first (lowest-index) argmax row.
Var max_over_rows(const Var& a);
Var sum_all(const Var& a);
Var gather_rows(const Var& table, std::span<const std::size_t> rows);
Var concat_rows(std::span<const Var> parts);
// Element-wise clamp to [lo, hi]; zero gradient where clamped.
Var clamp(const Var& a, double lo, double hi);

}  // namespace dhce::num

#endif  // DHCE_NUM_TAPE_HPP_
