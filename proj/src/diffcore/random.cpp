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

#include "brainood/diffcore/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "brainood/common/error.hpp"

namespace brainood {

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout rate must lie in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = uniform_open(rng) < rate ? 0.0 : keep_scale;
  return m;
}

Matrix symmetric_dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout rate must lie in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = uniform_open(rng) < rate ? 0.0 : keep_scale;
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) p(i, j) /= z;
  }
  return p;
}

}  // namespace brainood
