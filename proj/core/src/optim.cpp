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

#include "dhce/num/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dhce/errors.hpp"

namespace dhce::num {

AdamState AdamState::for_params(const ParameterSet& params, AdamConfig config) {
  if (!(config.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  AdamState s;
  s.config = config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params.value(i);
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw NumericError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.value(i)) || !state.m[i].same_shape(params.value(i)) ||
        !state.v[i].same_shape(params.value(i))) {
      throw NumericError("adam_step: shape mismatch for parameter " + params.name(i) + ": " +
                         params.value(i).shape_string() + " vs gradient " +
                         grads[i].shape_string());
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

GradCheckReport grad_check(const LossFn& f, const ParameterSet& params, double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check eps must be positive");

  Gradients analytic;
  GradCheckReport report;
  {
    Tape tape;
    Var loss = f(tape, params);
    if (!loss.value().all_finite()) throw NumericError("grad_check: loss is not finite");
    analytic = backward(tape, loss, params);
    report.value = loss.value()[0];
  }
  const double mag = std::abs(report.value);
  report.noise_floor =
      kNoiseUlps * (std::nextafter(mag, std::numeric_limits<double>::infinity()) - mag) / (2.0 * eps);

  auto evaluate = [&f](const ParameterSet& p) {
    Tape tape(false);
    const Tensor& v = f(tape, p).value();
    if (v.size() != 1 || !v.all_finite()) {
      throw NumericError("grad_check: function value is not a finite scalar");
    }
    return v[0];
  };

  ParameterSet probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckEntry entry;
    entry.name = params.name(i);
    entry.coordinates = params.value(i).size();
    for (std::size_t k = 0; k < params.value(i).size(); ++k) {
      const double orig = params.value(i)[k];
      probe.value(i)[k] = orig + eps;
      const double fp = evaluate(probe);
      probe.value(i)[k] = orig - eps;
      const double fm = evaluate(probe);
      probe.value(i)[k] = orig;

      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - numeric));
      if (std::abs(a - numeric) > report.noise_floor) {
        entry.max_resolved_rel_error = std::max(entry.max_resolved_rel_error, rel);
      }
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.max_abs_error = std::max(report.max_abs_error, entry.max_abs_error);
    report.max_resolved_rel_error =
        std::max(report.max_resolved_rel_error, entry.max_resolved_rel_error);
    report.per_parameter.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dhce::num
