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
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "brainood/diffcore/matrix.hpp"

namespace brainood::data {

/// Fraction of unordered off-diagonal pairs kept as edges.
inline constexpr double kDefaultEdgeFraction = 0.2;

/// One subject. `features` is the connectivity matrix itself; `adjacency` its
/// sparsified binary graph.
struct BrainNetwork {
  std::string subject_id;
  std::string site;
  std::size_t label = 0;
  Matrix features;
  Matrix adjacency;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Keeps the ceil(fraction · n(n−1)/2) unordered pairs with the highest values.
/// Ties at the threshold go to the lexicographically smaller (i, j).
Matrix sparsify_top_fraction(const Matrix& s, double fraction);

/// Throws Error(kData) naming `subject` when `s` violates the connectivity
/// invariants. Asymmetry up to 1e-9 and diagonal drift up to 1e-9 are repaired
/// (exact symmetrisation, unit diagonal); the repaired matrix is returned.
Matrix validate_connectivity(Matrix s, std::size_t expected_n, const std::string& subject);

Matrix read_matrix_csv(const std::filesystem::path& path);
std::string matrix_to_csv(const Matrix& m);

struct ManifestEntry {
  std::string subject_id;
  std::string matrix_path;
  std::size_t label = 0;
  std::string site;
};

struct DatasetManifest {
  int version = 1;
  std::size_t n = 0;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::optional<std::vector<Edge>> ground_truth_edges;
  std::optional<std::vector<std::string>> node_group_labels;

  /// Checks id uniqueness, label range, non-empty sites.
  void validate() const;
  std::vector<std::string> sites() const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);

class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, std::vector<BrainNetwork> networks);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<BrainNetwork>& networks() const { return networks_; }
  std::size_t size() const { return networks_.size(); }
  std::size_t node_count() const { return manifest_.n; }
  std::size_t class_count() const { return manifest_.class_names.size(); }

  bool contains(const std::string& subject_id) const { return index_.count(subject_id) != 0; }
  /// Throws Error(kNotFound) for an unknown id.
  const BrainNetwork& at(const std::string& subject_id) const;

 private:
  DatasetManifest manifest_;
  std::vector<BrainNetwork> networks_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Loads every subject of the manifest; matrix paths resolve relative to the manifest.
Dataset load_dataset(const std::filesystem::path& manifest_path, double edge_fraction = kDefaultEdgeFraction);

/// Builds networks from in-memory matrices (same validation as load_dataset).
Dataset build_dataset(DatasetManifest manifest, std::vector<Matrix> matrices,
                      double edge_fraction = kDefaultEdgeFraction);

}  // namespace brainood::data
