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

#include "dhce/attention.hpp"

#include <cmath>

#include "dhce/errors.hpp"

namespace dhce {

using num::Var;

AttentionResult additive_attention(const Var& seq, const Var& proj, const Var& context) {
  if (seq.rows() == 0) throw NumericError("attention over an empty sequence");
  Var scores = num::matmul(num::tanh(num::matmul(seq, proj)), context);  // n x 1
  Var weights = num::softmax_rows(num::transpose(scores));                // 1 x n
  return {num::matmul(weights, seq), weights};
}

AttentionResult scaled_dot_attention(const Var& queries, const Var& keys, const Var& values) {
  if (keys.rows() == 0 || queries.rows() == 0) {
    throw NumericError("scaled_dot_attention needs at least one query and one key");
  }
  if (queries.cols() != keys.cols() || keys.rows() != values.rows()) {
    throw NumericError("scaled_dot_attention shape mismatch: Q " + queries.value().shape_string() +
                       ", K " + keys.value().shape_string() + ", V " +
                       values.value().shape_string());
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  Var scores = num::scale(num::matmul(queries, num::transpose(keys)), inv_sqrt_d);
  Var weights = num::softmax_rows(scores);
  return {num::matmul(weights, values), weights};
}

}  // namespace dhce
