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

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace brainood::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Largest deviation the check observed, in the units of `tolerance`.
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

// Individual checks, sized by their arguments so the acceptance run can use
// larger instances than selftest does.

/// Full objective on n=8, d=4, three subjects, k=2, frozen noise; central
/// differences with step 1e-5. `corrupt_gradient` adds a spurious term whose value
/// is zero but whose analytic gradient is not (a deliberately broken backward pass).
CheckResult check_full_gradient(bool corrupt_gradient = false);
/// Entropy of the half mask, zero reconstruction and alignment on equal inputs,
/// and the three losses against direct loops on random 6×6 inputs.
std::vector<CheckResult> check_loss_identities(std::uint64_t seed);
/// Mean relaxed sample at α=1, τ=1 against quadrature; error in standard errors.
CheckResult check_sampler_mean(std::size_t draws, std::uint64_t seed);
/// Sampled edges outside the adjacency, counted over random instances.
CheckResult check_sampler_support(std::size_t instances, std::uint64_t seed);
/// Largest asymmetry of the mask, the relaxed samples and the reconstruction.
CheckResult check_symmetry(std::size_t passes, std::uint64_t seed);
/// Largest deviation of GIN outputs from node-permutation equivariance.
CheckResult check_gin_equivariance(std::size_t permutations, std::uint64_t seed);
/// Vector kernels against the scalar reference; bitwise.
CheckResult check_kernel_variants(std::uint64_t seed);
/// Two short training runs with the same seed; checkpoint bytes must match.
CheckResult check_training_determinism();

struct SelftestOptions {
  /// Name of a fault to inject ("gradient"); used by tests of the harness itself.
  std::string inject_fault;
};

struct SelftestReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

SelftestReport run_selftest(const SelftestOptions& options = {});
/// One line per check with its max error, then "all checks passed" or the failures.
void print_selftest(const SelftestReport& report, std::ostream& out);

}  // namespace brainood::cli
