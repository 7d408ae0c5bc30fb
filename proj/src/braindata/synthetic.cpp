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

#include "brainood/braindata/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "brainood/common/rng.hpp"

namespace brainood::data {

void SyntheticConfig::validate() const {
  auto fraction = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, std::string("synthetic config: ") + field + " must lie in [0, 1]");
  };
  auto nonneg = [](double v, const char* field) {
    if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidArgument, std::string("synthetic config: ") + field + " must be >= 0");
  };
  if (n < 4) throw Error(ErrorCode::kInvalidArgument, "synthetic config: n must be >= 4");
  if (sites == 0) throw Error(ErrorCode::kInvalidArgument, "synthetic config: sites must be >= 1");
  if (subjects_per_site == 0) throw Error(ErrorCode::kInvalidArgument, "synthetic config: subjects_per_site must be >= 1");
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic config: classes must be >= 2");
  fraction(causal_edge_fraction, "causal_edge_fraction");
  fraction(site_edge_fraction, "site_edge_fraction");
  nonneg(causal_strength, "causal_strength");
  nonneg(site_bias_strength, "site_bias_strength");
  nonneg(noise_level, "noise_level");
  nonneg(baseline_level, "baseline_level");
  const std::size_t pairs = n * (n - 1) / 2;
  const auto causal = static_cast<std::size_t>(std::llround(causal_edge_fraction * static_cast<double>(pairs)));
  const auto site = static_cast<std::size_t>(std::llround(site_edge_fraction * static_cast<double>(pairs)));
  if (causal + site > pairs)
    throw Error(ErrorCode::kInvalidArgument, "synthetic config: causal_edge_fraction + site_edge_fraction exceed the " +
                                                 std::to_string(pairs) + " available pairs");
}

double class_sign(std::size_t label, std::size_t classes) {
  return -1.0 + 2.0 * static_cast<double>(label) / static_cast<double>(classes - 1);
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n;
  std::vector<Edge> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  const auto causal_count =
      static_cast<std::size_t>(std::llround(cfg.causal_edge_fraction * static_cast<double>(pairs.size())));
  const auto site_count =
      static_cast<std::size_t>(std::llround(cfg.site_edge_fraction * static_cast<double>(pairs.size())));

  Rng structure = make_rng(cfg.seed, "synthetic/structure");
  std::vector<Edge> shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), structure);
  std::vector<Edge> causal(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(causal_count));
  std::vector<Edge> rest(shuffled.begin() + static_cast<std::ptrdiff_t>(causal_count), shuffled.end());
  std::sort(causal.begin(), causal.end());

  std::vector<std::vector<Edge>> site_edges(cfg.sites);
  for (std::size_t s = 0; s < cfg.sites; ++s) {
    std::vector<Edge> pick = rest;
    std::shuffle(pick.begin(), pick.end(), structure);
    pick.resize(site_count);
    std::sort(pick.begin(), pick.end());
    site_edges[s] = std::move(pick);
  }

  Matrix baseline(n, n);
  {
    std::uniform_real_distribution<double> base(-cfg.baseline_level, cfg.baseline_level);
    for (const Edge& e : pairs) baseline(e.first, e.second) = baseline(e.second, e.first) = base(structure);
  }
  Matrix causal_mask(n, n);
  for (const Edge& e : causal) causal_mask(e.first, e.second) = causal_mask(e.second, e.first) = 1.0;

  SyntheticDataset ds;
  ds.manifest.n = n;
  for (std::size_t c = 0; c < cfg.classes; ++c) ds.manifest.class_names.push_back("class" + std::to_string(c));
  ds.manifest.ground_truth_edges = causal;
  std::vector<std::string> groups(n);
  const std::size_t group_count = std::min<std::size_t>(7, n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = "net" + std::to_string(1 + i * group_count / n);
  ds.manifest.node_group_labels = std::move(groups);

  for (std::size_t s = 0; s < cfg.sites; ++s) {
    Matrix site_mask(n, n);
    for (const Edge& e : site_edges[s]) site_mask(e.first, e.second) = site_mask(e.second, e.first) = 1.0;
    for (std::size_t j = 0; j < cfg.subjects_per_site; ++j) {
      const std::size_t label = j % cfg.classes;
      const std::string site = "site" + std::to_string(s);
      const std::string id = site + "-sub" + std::to_string(1000 + j).substr(1);
      Rng noise_rng(derive_seed(derive_seed(cfg.seed, "synthetic/subject"), s * cfg.subjects_per_site + j));
      std::normal_distribution<double> noise(0.0, 1.0);
      const double sign = class_sign(label, cfg.classes);
      Matrix m(n, n);
      for (const Edge& e : pairs) {
        const double v = baseline(e.first, e.second) + sign * cfg.causal_strength * causal_mask(e.first, e.second) +
                         cfg.site_bias_strength * site_mask(e.first, e.second) + cfg.noise_level * noise(noise_rng);
        m(e.first, e.second) = m(e.second, e.first) = std::clamp(v, -1.0, 1.0);
      }
      for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
      ds.manifest.entries.push_back({id, "matrices/" + id + ".csv", label, site});
      ds.matrices.push_back(std::move(m));
    }
  }
  ds.site_edges = std::move(site_edges);
  return ds;
}

void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < ds.matrices.size(); ++i)
    write_file_atomic(dir / ds.manifest.entries[i].matrix_path, matrix_to_csv(ds.matrices[i]));
  write_file_atomic(dir / "manifest.json", manifest_to_json(ds.manifest));
}

}  // namespace brainood::data
