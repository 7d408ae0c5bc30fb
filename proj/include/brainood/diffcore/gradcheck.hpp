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

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "brainood/diffcore/matrix.hpp"
#include "brainood/diffcore/tape.hpp"

namespace brainood {

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Builds the scalar loss on `tape` from leaf variables bound to the parameters
/// (same order as passed to gradient_check). Must be deterministic: any dropout
/// or sampling noise has to be re-drawn from a fixed seed on every call.
using LossBuilder = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> params)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Compares reverse-mode gradients against central differences with step `eps`.
/// Per element the relative error is |analytic − numeric| / max(|analytic|, |numeric|, abs_floor).
GradCheckReport gradient_check(const LossBuilder& build, const std::vector<NamedTensor>& params, double eps,
                               double tol, double abs_floor = 1e-6);

}  // namespace brainood
