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

#include "brainood/model/selector.hpp"

#include <memory>
#include <string>

#include "brainood/common/error.hpp"
#include "brainood/diffcore/random.hpp"

namespace brainood::model {

MaskOutput apply_mask(ad::Var x, const SelectorParams& params, std::size_t blocks, Mode mode, Rng& rng) {
  const std::size_t n = params.w_mask.rows();
  if (blocks == 0 || x.cols() != n || x.rows() != n * blocks)
    throw ShapeError("apply_mask: features " + x.value().shape_string() + " do not match mask embedding " +
                     params.w_mask.value().shape_string() + " for " + std::to_string(blocks) + " subjects");
  MaskOutput out;
  out.mask_base = ad::sigmoid(ad::matmul(params.w_mask, ad::transpose(params.w_mask)));
  ad::Var tiled = blocks == 1 ? out.mask_base : ad::tile_rows(out.mask_base, blocks);
  if (mode == Mode::kTrain && params.dropout_rate > 0.0) {
    Matrix pattern(n * blocks, n);
    for (std::size_t b = 0; b < blocks; ++b) {
      const Matrix m = symmetric_dropout_mask(n, params.dropout_rate, rng);
      std::copy(m.data(), m.data() + m.size(), pattern.data() + b * n * n);
    }
    out.mask = ad::dropout(tiled, std::make_shared<const Matrix>(std::move(pattern)));
  } else {
    out.mask = tiled;
  }
  out.x_masked = ad::mul(x, out.mask);
  return out;
}

ad::Var entropy_loss(ad::Var mask_base) {
  const Matrix& m = mask_base.value();
  if (m.rows() != m.cols()) throw ShapeError("entropy_loss: mask is not square " + m.shape_string());
  for (double p : m.values())
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("entropy_loss: mask entry " + std::to_string(p) + " outside [0, 1]");
  const ad::Var complement = ad::add_scalar(ad::scale(mask_base, -1.0), 1.0);
  const ad::Var plogp = ad::add(ad::xlogx(mask_base), ad::xlogx(complement));
  return ad::scale(ad::sum(plogp), -1.0 / static_cast<double>(m.rows()));
}

}  // namespace brainood::model
