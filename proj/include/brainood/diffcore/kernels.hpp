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
#include <string_view>

// Data-parallel inner loops used by the tape. Every variant keeps the scalar
// reference's per-element operation order (separate multiply and add, no FMA,
// reductions over k in ascending order), so all variants agree bitwise.

namespace brainood::kernels {

struct KernelTable {
  const char* name;
  /// c[m×n] = a[m×k] · b[k×n]
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  /// c[m×n] = a[k×m]ᵀ · b[k×n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  void (*add)(const double* x, const double* y, double* out, std::size_t len);
  void (*sub)(const double* x, const double* y, double* out, std::size_t len);
  void (*mul)(const double* x, const double* y, double* out, std::size_t len);
  void (*scale)(double alpha, const double* x, double* out, std::size_t len);
  /// y += alpha · x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t len);
  /// y += x
  void (*accumulate)(const double* x, double* y, std::size_t len);
};

const KernelTable& scalar();
/// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2();
const KernelTable* neon();

/// Best available table. BRAINOOD_KERNELS=scalar|avx2|neon overrides the choice.
const KernelTable& active();
/// Forces a variant for the current process; returns false if unavailable.
bool select(std::string_view name);

}  // namespace brainood::kernels
