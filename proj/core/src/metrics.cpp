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

#include "dhce/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "dhce/errors.hpp"

namespace dhce::metrics {

std::vector<std::size_t> rank_codes(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double precision_at_k(std::span<const double> scores, const hypergraph::MultiHot& truth,
                      std::size_t k) {
  if (k < 1) throw ConfigError("precision_at_k needs k >= 1");
  if (scores.size() != truth.size()) {
    throw NumericError("precision_at_k: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(truth.size()) + " codes");
  }
  const std::size_t positives = truth.count();
  if (positives == 0) throw DataError("precision_at_k with an empty truth set");

  const std::vector<std::size_t> order = rank_codes(scores);
  const std::size_t top = std::min(k, order.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += truth.test(order[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(std::min(k, positives));
}

void PrecisionAccumulator::add(std::span<const double> scores, const hypergraph::MultiHot& truth) {
  for (std::size_t i = 0; i < kReportedK.size(); ++i) {
    sums_[i] += precision_at_k(scores, truth, kReportedK[i]);
  }
  ++count_;
}

double PrecisionAccumulator::mean(std::size_t which) const {
  return count_ == 0 ? 0.0 : sums_.at(which) / static_cast<double>(count_);
}

double PrecisionAccumulator::mean_at(std::size_t k) const {
  for (std::size_t i = 0; i < kReportedK.size(); ++i) {
    if (kReportedK[i] == k) return mean(i);
  }
  throw ConfigError("precision@" + std::to_string(k) + " is not tracked");
}

}  // namespace dhce::metrics
