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
#include <optional>
#include <string>
#include <vector>

#include "brainood/braindata/network.hpp"
#include "brainood/model/model.hpp"
#include "brainood/trainer/checkpoint.hpp"

namespace brainood::interpret {

/// Mean noise-free sampling probability per edge over a subject set.
struct EdgeScoreMap {
  std::size_t n = 0;
  Matrix scores;  // n×n, symmetric, zero diagonal, entries in [0, 1]
  std::size_t subject_count = 0;
  std::optional<std::vector<std::string>> group_labels;
};

/// γ = σ(α/τ) for every subject, averaged cell-wise; a subject lacking an edge
/// contributes 0 to that cell. Subjects are accumulated in sorted-id order so the
/// map does not depend on how the id list is ordered.
EdgeScoreMap score_map(const model::BrainOODModel& model, const data::Dataset& dataset,
                       const std::vector<std::string>& subject_ids);
EdgeScoreMap score_map(const Checkpoint& ckpt, const data::Dataset& dataset, const std::vector<std::string>& subject_ids);

struct RankedEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double score = 0.0;
  std::string group_i;
  std::string group_j;
};

struct TopEdges {
  std::vector<RankedEdge> edges;
  /// Fewer than k nonzero cells were available.
  bool short_list = false;
};

/// Highest-scoring unordered pairs (i < j) among nonzero cells; ties by (i, j).
TopEdges top_k_edges(const EdgeScoreMap& map, std::size_t k);

/// ROC-AUC of the map's scores over all unordered pairs as a detector of `truth`.
double recovery_auc(const EdgeScoreMap& map, const std::vector<data::Edge>& truth);

struct GroupBlocks {
  std::vector<std::string> groups;  // first-appearance order
  Matrix means;                     // mean score over off-diagonal cells of each group pair
};

GroupBlocks group_block_means(const EdgeScoreMap& map);

std::string score_map_csv(const EdgeScoreMap& map);
/// {subject_count, n, group_block_means: {groups, means}, top_k: [...], top_k_short}
std::string score_map_summary_json(const EdgeScoreMap& map, const TopEdges& top);

}  // namespace brainood::interpret
