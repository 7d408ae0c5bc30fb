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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "brainood/braindata/network.hpp"

namespace brainood::data {

/// Multi-site connectivity data with a planted label-bearing edge set and
/// per-site additive bias edges.
struct SyntheticConfig {
  std::size_t n = 32;
  std::size_t sites = 4;
  std::size_t subjects_per_site = 50;
  std::size_t classes = 2;
  double causal_edge_fraction = 0.05;
  double site_edge_fraction = 0.05;
  double causal_strength = 0.4;
  double site_bias_strength = 0.3;
  double noise_level = 0.2;
  /// Half-width of the uniform population baseline shared by every subject.
  double baseline_level = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  DatasetManifest manifest;  // matrix_path entries are relative: matrices/<id>.csv
  std::vector<Matrix> matrices;
  std::vector<std::vector<Edge>> site_edges;
};

/// Pure function of the config, including the seed.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Writes manifest.json and matrices/*.csv under `dir` (each file via temp + rename).
void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir);

/// Class sign in [−1, 1] used to modulate the planted edges.
double class_sign(std::size_t label, std::size_t classes);

}  // namespace brainood::data
