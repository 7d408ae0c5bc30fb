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

#include "brainood/diffcore/adam.hpp"

#include <cmath>
#include <string>

#include "brainood/common/error.hpp"

namespace brainood {

AdamState AdamState::for_params(std::span<const Matrix> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Matrix& p : params) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
    throw ShapeError("adam_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]) || !params[i].same_shape(state.v[i]))
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " shape " + params[i].shape_string() +
                       " vs gradient " + grads[i].shape_string());
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    const Matrix& g = grads[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * (g[j] * g[j]);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace brainood
