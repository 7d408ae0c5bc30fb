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

#include <cstring>

#include "brainood/diffcore/kernels.hpp"

namespace brainood::kernels {
namespace {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + av * brow[j];
    }
  }
}

void add(const double* x, const double* y, double* out, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) out[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* out, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) out[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) out[i] = x[i] * y[i];
}

void scale(double alpha, const double* x, double* out, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) out[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] = y[i] + alpha * x[i];
}

void accumulate(const double* x, double* y, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] = y[i] + x[i];
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar", gemm, gemm_tn, add, sub, mul, scale, axpy, accumulate};
  return table;
}

}  // namespace brainood::kernels
