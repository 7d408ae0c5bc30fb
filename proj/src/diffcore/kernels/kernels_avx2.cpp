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

// Compiled with -mavx2 (and without -mfma) only on x86-64 builds.
#include <immintrin.h>

#include <cstring>

#include "brainood/diffcore/kernels.hpp"

namespace brainood::kernels {
namespace {

// c_row[0..n) += av * b_row[0..n)
inline void row_update(double* crow, double av, const double* brow, std::size_t n) {
  const __m256d va = _mm256_set1_pd(av);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    c0 = _mm256_add_pd(c0, _mm256_mul_pd(va, _mm256_loadu_pd(brow + j)));
    c1 = _mm256_add_pd(c1, _mm256_mul_pd(va, _mm256_loadu_pd(brow + j + 4)));
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    c0 = _mm256_add_pd(c0, _mm256_mul_pd(va, _mm256_loadu_pd(brow + j)));
    _mm256_storeu_pd(crow + j, c0);
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

template <typename VecOp, typename ScalarOp>
inline void binary(const double* x, const double* y, double* out, std::size_t len, VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < len; ++i) out[i] = sop(x[i], y[i]);
}

void add(const double* x, const double* y, double* out, std::size_t len) {
  binary(x, y, out, len, [](__m256d p, __m256d q) { return _mm256_add_pd(p, q); },
         [](double p, double q) { return p + q; });
}

void sub(const double* x, const double* y, double* out, std::size_t len) {
  binary(x, y, out, len, [](__m256d p, __m256d q) { return _mm256_sub_pd(p, q); },
         [](double p, double q) { return p - q; });
}

void mul(const double* x, const double* y, double* out, std::size_t len) {
  binary(x, y, out, len, [](__m256d p, __m256d q) { return _mm256_mul_pd(p, q); },
         [](double p, double q) { return p * q; });
}

void scale(double alpha, const double* x, double* out, std::size_t len) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < len; ++i) out[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t len) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < len; ++i) y[i] = y[i] + alpha * x[i];
}

void accumulate(const double* x, double* y, std::size_t len) {
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < len; ++i) y[i] = y[i] + x[i];
}

}  // namespace

const KernelTable* avx2_table_if_compiled() {
  static const KernelTable table{"avx2", gemm, gemm_tn, add, sub, mul, scale, axpy, accumulate};
  return &table;
}

}  // namespace brainood::kernels
