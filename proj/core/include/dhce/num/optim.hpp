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

#ifndef DHCE_NUM_OPTIM_HPP_
#define DHCE_NUM_OPTIM_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dhce/num/tape.hpp"

namespace dhce::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParameterSet& params, AdamConfig config);
};

// One bias-corrected Adam update of every parameter in place.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state);

/// Builds a scalar loss for the given parameter values on the given tape.
using LossFn = std::function<Var(Tape& tape, const ParameterSet& params)>;

// Central differences cannot resolve disagreements smaller than the rounding
// of f itself: about ulp(f) / (2 eps). A coordinate whose |a - n| is within
// this many such units is treated as agreeing in max_resolved_rel_error.
inline constexpr double kNoiseUlps = 8.0;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_resolved_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckReport {
  double value = 0.0;  // f at the unperturbed parameters
  double noise_floor = 0.0;  // kNoiseUlps * ulp(value) / (2 eps)
  double max_rel_error = 0.0;
  double max_resolved_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::vector<GradCheckEntry> per_parameter;
};

// Compares backward() against central differences for every coordinate of
// every parameter. Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LossFn& f, const ParameterSet& params, double eps = 1e-5);

}  // namespace dhce::num

#endif  // DHCE_NUM_OPTIM_HPP_
