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

#include "brainood/common/rng.hpp"
#include "brainood/diffcore/tape.hpp"
#include "brainood/model/common.hpp"

namespace brainood::model {

/// Learnable feature mask M = Dropout(σ(W Wᵀ)) applied as X′ = X ⊙ M.
struct SelectorParams {
  ad::Var w_mask;  // n×d
  double dropout_rate = 0.2;
};

struct MaskOutput {
  ad::Var mask;       // (B·n)×n, one realisation per subject
  ad::Var mask_base;  // n×n, σ(W Wᵀ), shared by the batch
  ad::Var x_masked;   // (B·n)×n
};

/// `x` stacks B subjects' n×n feature matrices. In training mode each subject draws
/// its own pair-symmetric inverted-dropout pattern; evaluation uses M = σ(W Wᵀ).
MaskOutput apply_mask(ad::Var x, const SelectorParams& params, std::size_t blocks, Mode mode, Rng& rng);

/// (1/n) Σ_ij h(p_ij) over the pre-dropout mask, where h(p) = −p log p − (1−p) log(1−p)
/// is the entropy of the keep/drop decision for one cell; natural log, 0·log 0 = 0.
ad::Var entropy_loss(ad::Var mask_base);

}  // namespace brainood::model
