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
#include <memory>
#include <vector>

#include "brainood/common/rng.hpp"
#include "brainood/diffcore/tape.hpp"
#include "brainood/model/common.hpp"

namespace brainood::model {

/// One GIN layer: h ← Dropout(ReLU(BN(MLP((1+ε)·h + Σ_u w_vu·h_u)))), MLP = Lin→ReLU→Lin.
struct GinLayerParams {
  ad::Var lin1_w, lin1_b, lin2_w, lin2_b;
  ad::Var epsilon;   // 1×1
  ad::Var bn_gamma;  // 1×d
  ad::Var bn_beta;   // 1×d
  /// Row 0 running mean, row 1 running variance; read in evaluation mode.
  std::shared_ptr<const Matrix> bn_running;
};

struct GinParams {
  std::vector<GinLayerParams> layers;
  double dropout = 0.5;
  double bn_eps = 1e-5;
};

/// Batch statistics observed by one training-mode batch-norm call, for the
/// caller to fold into the running estimates.
struct BatchNormObservation {
  std::size_t layer = 0;
  Matrix mean;
  Matrix unbiased_var;
};

/// `x` stacks B subjects' node features ((B·n)×f); `weights` stacks their n×n
/// edge-weight matrices (binary A or soft γ-weighted A′). Batch norm pools all
/// B·n nodes. Training-mode statistics are appended to `observed` if given.
ad::Var gin_encode(ad::Var x, ad::Var weights, const GinParams& params, std::size_t blocks, Mode mode, Rng& rng,
                   std::vector<BatchNormObservation>* observed = nullptr);

/// High-pass layer ĥ_v = h_v − W·mean_{u∈N(v)} h_u; isolated nodes pass through unchanged.
struct HpgnnParams {
  ad::Var w;  // d×d
};

/// Row-normalised (mean-aggregation) copy of a stacked binary adjacency.
Matrix mean_aggregation_weights(const Matrix& adjacency_stack, std::size_t blocks);

ad::Var hpgnn_encode(ad::Var h, const Matrix& adjacency_stack, const HpgnnParams& params, std::size_t blocks);

/// X̂ = tanh(Ĥ Ĥᵀ) ⊙ M per subject.
ad::Var reconstruct(ad::Var h_hat, ad::Var mask, std::size_t blocks);

/// Mean over subjects of (1/n)·‖X̂ − X′‖_F².
ad::Var recon_loss(ad::Var x_hat, ad::Var x_masked, std::size_t blocks);

}  // namespace brainood::model
