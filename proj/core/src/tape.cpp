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

#include "dhce/num/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dhce/errors.hpp"

namespace dhce::num {

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParameterSet::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw NumericError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant contains non-finite values");
  nodes_.push_back(Node{std::move(value), {}, {}, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
  if (index >= params.size()) throw NumericError("parameter index out of range");
  if (param_nodes_.size() < params.size()) param_nodes_.resize(params.size());
  if (param_nodes_[index]) return Var(this, *param_nodes_[index]);
  nodes_.push_back(Node{params.value(index), {}, {}, index});
  param_nodes_[index] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw NumericError("op input refers to an unknown node");
  }
  if (record_) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), std::nullopt});
  } else {
    nodes_.push_back(Node{std::move(value), {}, {}, std::nullopt});
  }
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate_grad(std::vector<Tensor>& grads, std::size_t id, const Tensor& g) const {
  if (grads[id].empty() && !value(id).empty()) {
    grads[id] = g;
    return;
  }
  accumulate(grads[id], g);
}

Gradients backward(const Tape& tape, const Var& loss, const ParameterSet& params) {
  if (loss.tape() != &tape) throw NumericError("loss does not belong to this tape");
  const Tensor& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw NumericError("backward requires a 1x1 loss, got " + lv.shape_string());
  }
  if (!tape.recording()) throw NumericError("backward on a tape that did not record gradients");

  std::vector<Tensor> grads(tape.size());
  grads[loss.id()] = Tensor(1, 1, 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    const auto& node = tape.nodes_[id];
    if (node.backward) node.backward(tape, grads[id], grads);
  }

  Gradients out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params.value(i);
    std::optional<std::size_t> node =
        i < tape.param_nodes_.size() ? tape.param_nodes_[i] : std::nullopt;
    if (node && !grads[*node].empty()) {
      out.push_back(std::move(grads[*node]));
    } else {
      out.emplace_back(p.rows(), p.cols());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw NumericError("operands live on different tapes");
  }
  return *a.tape();
}

Tensor checked(Tensor t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  return t;
}

enum class Bcast { kSame, kRow, kCol };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  throw NumericError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                     b.shape_string());
}

double bval(const Tensor& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::kSame:
      return b(r, c);
    case Bcast::kRow:
      return b(0, c);
    case Bcast::kCol:
      return b(r, 0);
  }
  return 0.0;
}

// Reduces a full-shape gradient down to b's broadcast shape.
Tensor reduce_to(const Tensor& g, Bcast k, const Tensor& b) {
  if (k == Bcast::kSame) return g;
  Tensor out(b.rows(), b.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      if (k == Bcast::kRow) {
        out(0, c) += g(r, c);
      } else {
        out(r, 0) += g(r, c);
      }
    }
  }
  return out;
}

Tensor matmul_raw(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  }
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw NumericError("matmul shape mismatch: " + av.shape_string() + " x " + bv.shape_string());
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(checked(matmul_raw(av, bv), "matmul"), {ia, ib},
                     [ia, ib](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                       t.accumulate_grad(grads, ia, matmul_nt(g, t.value(ib)));
                       t.accumulate_grad(grads, ib, matmul_tn(t.value(ia), g));
                     });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia},
                          [ia](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor gt(g.cols(), g.rows());
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              for (std::size_t c = 0; c < g.cols(); ++c) gt(c, r) = g(r, c);
                            }
                            t.accumulate_grad(grads, ia, gt);
                          });
}

namespace {

enum class BinOp { kAdd, kSub, kMul };

Var binary(const Var& a, const Var& b, BinOp op, const char* name) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast k = broadcast_kind(av, bv, name);
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) {
      const double x = av(r, c), y = bval(bv, k, r, c);
      out(r, c) = op == BinOp::kAdd ? x + y : op == BinOp::kSub ? x - y : x * y;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      checked(std::move(out), name), {ia, ib},
      [ia, ib, k, op](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (op == BinOp::kMul) {
          Tensor ga(g.rows(), g.cols()), gb_full(g.rows(), g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
              ga(r, c) = g(r, c) * bval(bv, k, r, c);
              gb_full(r, c) = g(r, c) * av(r, c);
            }
          }
          t.accumulate_grad(grads, ia, ga);
          t.accumulate_grad(grads, ib, reduce_to(gb_full, k, bv));
          return;
        }
        t.accumulate_grad(grads, ia, g);
        Tensor gb = reduce_to(g, k, bv);
        if (op == BinOp::kSub) {
          for (double& v : gb.data()) v = -v;
        }
        t.accumulate_grad(grads, ib, gb);
      });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinOp::kAdd, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinOp::kSub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinOp::kMul, "mul"); }

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape()->record(checked(std::move(out), "scale"), {ia},
                          [ia, s](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            Tensor ga = g;
                            for (double& v : ga.data()) v *= s;
                            t.accumulate_grad(grads, ia, ga);
                          });
}

Var shift(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  const std::size_t ia = a.id();
  return a.tape()->record(checked(std::move(out), "shift"), {ia},
                          [ia](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            t.accumulate_grad(grads, ia, g);
                          });
}

Var map_unary(const Var& a, Unary f) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    switch (f) {
      case Unary::kSigmoid:
        out[i] = sigmoid_scalar(x);
        break;
      case Unary::kTanh:
        out[i] = std::tanh(x);
        break;
      case Unary::kExp:
        out[i] = std::exp(x);
        break;
      case Unary::kLog:
        if (!(x > 0.0)) {
          throw NumericError("log of non-positive entry at index (" +
                             std::to_string(i / av.cols()) + ", " +
                             std::to_string(i % av.cols()) + "): " + std::to_string(x));
        }
        out[i] = std::log(x);
        break;
      case Unary::kNegate:
        out[i] = -x;
        break;
    }
  }
  const std::size_t ia = a.id();
  const std::size_t self = a.tape()->size();
  return a.tape()->record(
      checked(std::move(out), "map_unary"), {ia},
      [ia, self, f](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = 0.0;
          switch (f) {
            case Unary::kSigmoid:
              d = y[i] * (1.0 - y[i]);
              break;
            case Unary::kTanh:
              d = 1.0 - y[i] * y[i];
              break;
            case Unary::kExp:
              d = y[i];
              break;
            case Unary::kLog:
              d = 1.0 / x[i];
              break;
            case Unary::kNegate:
              d = -1.0;
              break;
          }
          ga[i] = g[i] * d;
        }
        t.accumulate_grad(grads, ia, ga);
      });
}

Var sigmoid(const Var& a) { return map_unary(a, Unary::kSigmoid); }
Var tanh(const Var& a) { return map_unary(a, Unary::kTanh); }
Var exp(const Var& a) { return map_unary(a, Unary::kExp); }
Var log(const Var& a) { return map_unary(a, Unary::kLog); }
Var negate(const Var& a) { return map_unary(a, Unary::kNegate); }

Var softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.empty()) throw NumericError("softmax_rows of an empty tensor");
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < av.cols(); ++c) mx = std::max(mx, av(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      out(r, c) = std::exp(av(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= z;
  }
  const std::size_t ia = a.id();
  const std::size_t self = a.tape()->size();
  return a.tape()->record(checked(std::move(out), "softmax_rows"), {ia},
                          [ia, self](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            const Tensor& y = t.value(self);
                            Tensor ga(g.rows(), g.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              double dot = 0.0;
                              for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                              for (std::size_t c = 0; c < g.cols(); ++c) {
                                ga(r, c) = y(r, c) * (g(r, c) - dot);
                              }
                            }
                            t.accumulate_grad(grads, ia, ga);
                          });
}

Var max_over_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.rows() == 0 || av.cols() == 0) throw NumericError("max_over_rows of an empty tensor");
  Tensor out(1, av.cols());
  std::vector<std::size_t> argmax(av.cols(), 0);
  for (std::size_t c = 0; c < av.cols(); ++c) {
    double best = av(0, c);
    for (std::size_t r = 1; r < av.rows(); ++r) {
      if (av(r, c) > best) {
        best = av(r, c);
        argmax[c] = r;
      }
    }
    out(0, c) = best;
  }
  const std::size_t ia = a.id();
  const std::size_t rows = av.rows();
  return a.tape()->record(
      std::move(out), {ia},
      [ia, rows, argmax = std::move(argmax)](const Tape& t, const Tensor& g,
                                             std::vector<Tensor>& grads) {
        Tensor ga(rows, g.cols());
        for (std::size_t c = 0; c < g.cols(); ++c) ga(argmax[c], c) = g(0, c);
        t.accumulate_grad(grads, ia, ga);
      });
}

Var sum_all(const Var& a) {
  const Tensor& av = a.value();
  const std::size_t ia = a.id();
  const std::size_t r = av.rows(), c = av.cols();
  return a.tape()->record(checked(Tensor(1, 1, av.sum()), "sum_all"), {ia},
                          [ia, r, c](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            t.accumulate_grad(grads, ia, Tensor(r, c, g[0]));
                          });
}

Var gather_rows(const Var& table, std::span<const std::size_t> rows) {
  const Tensor& tv = table.value();
  Tensor out(rows.size(), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= tv.rows()) {
      throw NumericError("gather_rows index " + std::to_string(rows[i]) + " out of range for " +
                         tv.shape_string());
    }
    for (std::size_t c = 0; c < tv.cols(); ++c) out(i, c) = tv(rows[i], c);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return table.tape()->record(
      std::move(out), {it},
      [it, idx = std::move(idx)](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& tv = t.value(it);
        Tensor gt(tv.rows(), tv.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t c = 0; c < tv.cols(); ++c) gt(idx[i], c) += g(i, c);
        }
        t.accumulate_grad(grads, it, gt);
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat_rows of zero tensors");
  Tape* tape = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw NumericError("operands live on different tapes");
    if (p.cols() != cols) {
      throw NumericError("concat_rows column mismatch: " + std::to_string(cols) + " vs " +
                         std::to_string(p.cols()));
    }
    rows += p.rows();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t r0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + r0 * cols);
    r0 += v.rows();
  }
  std::vector<std::size_t> inputs = ids;
  return tape->record(std::move(out), std::move(inputs),
                      [ids](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                        std::size_t r0 = 0;
                        for (std::size_t id : ids) {
                          const Tensor& v = t.value(id);
                          std::vector<double> part(g.data().begin() + r0 * g.cols(),
                                                   g.data().begin() + (r0 + v.rows()) * g.cols());
                          t.accumulate_grad(grads, id, Tensor(v.rows(), v.cols(), std::move(part)));
                          r0 += v.rows();
                        }
                      });
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo <= hi)) throw NumericError("clamp bounds out of order");
  Tensor out = a.value();
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {ia},
                          [ia, lo, hi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                            const Tensor& x = t.value(ia);
                            Tensor ga(g.rows(), g.cols());
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              ga[i] = (x[i] >= lo && x[i] <= hi) ? g[i] : 0.0;
                            }
                            t.accumulate_grad(grads, ia, ga);
                          });
}

}  // namespace dhce::num
