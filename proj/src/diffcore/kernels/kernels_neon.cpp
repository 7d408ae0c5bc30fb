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

// Compiled only on aarch64 builds.
#include <arm_neon.h>

#include <cstring>

#include "brainood/diffcore/kernels.hpp"

namespace brainood::kernels {
namespace {

inline void row_update(double* crow, double av, const double* brow, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(av);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    // vmulq + vaddq rather than vfmaq: matches the scalar rounding sequence.
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(brow + j));
    vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
  }
  for (; j < n; ++j) crow[j] = crow[j] + av * brow[j];
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) row_update(c + i * n, a[i * k + p], b + p * n, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) row_update(c + i * n, a[p * m + i], b + p * n, n);
}

void add(const double* x, const double* y, double* out, std::size_t len) {
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < len; ++i) out[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* out, std::size_t len) {
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < len; ++i) out[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t len) {
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < len; ++i) out[i] = x[i] * y[i];
}

void scale(double alpha, const double* x, double* out, std::size_t len) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < len; ++i) out[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t len) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) {
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < len; ++i) y[i] = y[i] + alpha * x[i];
}

void accumulate(const double* x, double* y, std::size_t len) {
  std::size_t i = 0;
  for (; i + 2 <= len; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  for (; i < len; ++i) y[i] = y[i] + x[i];
}

}  // namespace

const KernelTable* neon_table_if_compiled() {
  static const KernelTable table{"neon", gemm, gemm_tn, add, sub, mul, scale, axpy, accumulate};
  return &table;
}

}  // namespace brainood::kernels
