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

#ifndef DHCE_METRICS_HPP_
#define DHCE_METRICS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dhce/hypergraph.hpp"

namespace dhce::metrics {

inline constexpr std::array<std::size_t, 3> kReportedK = {5, 10, 20};

// Code indices ordered by descending score; equal scores keep ascending index.
std::vector<std::size_t> rank_codes(std::span<const double> scores);

// |top_k(scores) ∩ truth| / min(k, |truth|).
double precision_at_k(std::span<const double> scores, const hypergraph::MultiHot& truth,
                      std::size_t k);

/// Running average of precision@k over predicted visits.
class PrecisionAccumulator {
 public:
  void add(std::span<const double> scores, const hypergraph::MultiHot& truth);
  std::size_t count() const noexcept { return count_; }
  // Mean precision@kReportedK[i]; 0 when nothing was added.
  double mean(std::size_t which) const;
  double mean_at(std::size_t k) const;

 private:
  std::array<double, kReportedK.size()> sums_{};
  std::size_t count_ = 0;
};

}  // namespace dhce::metrics

#endif  // DHCE_METRICS_HPP_
