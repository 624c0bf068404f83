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

#ifndef DHCE_ATTENTION_HPP_
#define DHCE_ATTENTION_HPP_

#include "dhce/num/tape.hpp"

namespace dhce {

struct AttentionResult {
  num::Var output;
  num::Var weights;  // one row per query, each row sums to 1
};

// Additive attention pooling over the rows of `seq` (n x k):
//   score_i = w^T tanh(P^T s_i),  weights = softmax(scores),
//   output = sum_i weights_i s_i   (1 x k).
// P is k x k, w is k x 1.
AttentionResult additive_attention(const num::Var& seq, const num::Var& proj,
                                   const num::Var& context);

// Scaled dot-product attention, queries (n x d) against keys/values (m x d):
//   softmax(Q K^T / sqrt(d)) V.
AttentionResult scaled_dot_attention(const num::Var& queries, const num::Var& keys,
                                     const num::Var& values);

}  // namespace dhce

#endif  // DHCE_ATTENTION_HPP_
