/*
 * Copyright 2026 The BrainOOD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "brainood/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace brainood {
namespace {

double evaluate(const LossBuilder& build, const std::vector<Matrix>& values) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(values.size());
  for (const Matrix& v : values) vars.push_back(tape.variable(v));
  return build(tape, vars).item();
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& build, const std::vector<NamedTensor>& params, double eps,
                               double tol, double abs_floor) {
  std::vector<Matrix> values;
  values.reserve(params.size());
  for (const NamedTensor& p : params) values.push_back(p.value);

  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& v : values) vars.push_back(tape.variable(v));
    const ad::Var loss = build(tape, vars);
    const ad::Gradients grads = ad::backward(tape, loss);
    for (const ad::Var& v : vars) analytic.push_back(grads.of(v));
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheckEntry entry;
    entry.name = params[p].name;
    for (std::size_t i = 0; i < values[p].size(); ++i) {
      const double original = values[p][i];
      values[p][i] = original + eps;
      const double up = evaluate(build, values);
      values[p][i] = original - eps;
      const double down = evaluate(build, values);
      values[p][i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    entry.passed = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace brainood
