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
#include <span>
#include <vector>

#include "brainood/common/rng.hpp"
#include "brainood/diffcore/tape.hpp"

namespace brainood::model {

/// Unordered edges (v < u) of a stacked binary adjacency, in row-major order per
/// subject, with the index vectors the scorer and scatter primitives need.
struct EdgeIndex {
  std::size_t n = 0;
  std::size_t blocks = 0;
  std::vector<std::size_t> subject;  // per edge
  std::vector<std::size_t> v, u;     // per edge, local node ids
  /// Global row of v then u per direction: rows [0,E) are (v,u), rows [E,2E) are (u,v).
  std::shared_ptr<const std::vector<std::size_t>> first_rows;
  std::shared_ptr<const std::vector<std::size_t>> second_rows;
  /// Flat positions of (v,u) and (u,v) in the (B·n)×n stack, two per edge.
  std::shared_ptr<const std::vector<std::size_t>> positions;

  std::size_t edge_count() const { return v.size(); }
};

EdgeIndex build_edge_index(const Matrix& adjacency_stack, std::size_t blocks);

/// Edge scorer 2d→d→1: s(v,u) = relu([H_v | H_u]·W1 + b1)·W2 + b2.
struct ScorerParams {
  ad::Var w1;  // 2d×d
  ad::Var b1;  // 1×d
  ad::Var w2;  // d×1
  ad::Var b2;  // 1×1
};

/// Symmetrised per-edge scores α = (s(v,u) + s(u,v)) / 2 as an E×1 column.
ad::Var score_edges(ad::Var h, const EdgeIndex& edges, const ScorerParams& params);

/// Scatters per-edge values into the symmetric (B·n)×n stack, zero off the support.
ad::Var edges_to_stack(ad::Var edge_values, const EdgeIndex& edges);

enum class SampleMode {
  kSoft,       // γ = σ((α + D)/τ), D = log U − log(1−U)
  kHard,       // soft γ plus a Bernoulli(γ) draw per unordered edge
  kNoiseFree,  // γ = σ(α/τ)
};

struct SampledSubgraph {
  ad::Var gamma_edges;  // E×1
  ad::Var gamma;        // (B·n)×n
  Matrix hard;          // (B·n)×n binary, populated in kHard mode only
  double tau = 1.0;
};

/// One U per unordered edge, shared by both orientations.
SampledSubgraph concrete_sample(ad::Var alpha, const EdgeIndex& edges, double tau, Rng& rng, SampleMode mode);

/// Mean over cells of the per-cell population standard deviation across every
/// sampled matrix in `samples` (each a stack of n×n blocks).
ad::Var align_loss(std::span<const ad::Var> samples, std::size_t n);

}  // namespace brainood::model
