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

#include "brainood/interpret/interpret.hpp"

#include <algorithm>
#include <set>

#include "brainood/common/error.hpp"
#include "brainood/trainer/metrics.hpp"
#include "json.hpp"

namespace brainood::interpret {

namespace {

constexpr std::size_t kBatch = 64;

std::string group_of(const EdgeScoreMap& map, std::size_t i) {
  return map.group_labels ? (*map.group_labels)[i] : std::string();
}

}  // namespace

EdgeScoreMap score_map(const model::BrainOODModel& model, const data::Dataset& dataset,
                       const std::vector<std::string>& subject_ids) {
  if (subject_ids.empty()) throw Error(ErrorCode::kInvalidArgument, "score_map: no subjects given");
  if (!model.config().use_sampler)
    throw Error(ErrorCode::kInvalidArgument, "score_map: the model has no edge scorer (sampler disabled)");
  std::vector<std::string> ids = subject_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(ErrorCode::kInvalidArgument, "score_map: duplicate subject id");
  std::vector<std::size_t> idx;
  for (const std::string& id : ids) idx.push_back(static_cast<std::size_t>(&dataset.at(id) - dataset.networks().data()));

  const std::size_t n = model.node_count();
  EdgeScoreMap map;
  map.n = n;
  map.scores = Matrix(n, n);
  map.subject_count = ids.size();
  map.group_labels = dataset.manifest().node_group_labels;
  Rng unused(0);
  for (std::size_t start = 0; start < idx.size(); start += kBatch) {
    const std::size_t end = std::min(idx.size(), start + kBatch);
    const model::Batch batch = model::make_batch(dataset, std::span<const std::size_t>(idx.data() + start, end - start));
    ad::Tape tape;
    const model::ForwardResult fwd =
        model.forward(tape, model.bind(tape), batch, {model::Mode::kEval, model::SampleMode::kNoiseFree}, unused);
    const Matrix& gamma = fwd.samples.front().gamma.value();
    for (std::size_t b = 0; b < batch.blocks; ++b)
      for (std::size_t i = 0; i < n * n; ++i) map.scores[i] += gamma[b * n * n + i];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& v : map.scores.values()) v *= inv;
  return map;
}

EdgeScoreMap score_map(const Checkpoint& ckpt, const data::Dataset& dataset, const std::vector<std::string>& subject_ids) {
  if (dataset.node_count() != ckpt.n) throw Error(ErrorCode::kData, "score_map: dataset node count differs from the checkpoint");
  return score_map(restore_model(ckpt), dataset, subject_ids);
}

TopEdges top_k_edges(const EdgeScoreMap& map, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k_edges: k must be >= 1");
  std::vector<RankedEdge> all;
  for (std::size_t i = 0; i < map.n; ++i)
    for (std::size_t j = i + 1; j < map.n; ++j)
      if (map.scores(i, j) != 0.0) all.push_back({i, j, map.scores(i, j), group_of(map, i), group_of(map, j)});
  std::stable_sort(all.begin(), all.end(), [](const RankedEdge& a, const RankedEdge& b) { return a.score > b.score; });
  TopEdges out;
  out.short_list = all.size() < k;
  all.resize(std::min(k, all.size()));
  out.edges = std::move(all);
  return out;
}

double recovery_auc(const EdgeScoreMap& map, const std::vector<data::Edge>& truth) {
  if (truth.empty()) throw Error(ErrorCode::kInvalidArgument, "recovery_auc: empty ground truth");
  std::set<data::Edge> planted;
  for (auto [i, j] : truth) {
    if (i == j || i >= map.n || j >= map.n)
      throw Error(ErrorCode::kInvalidArgument, "recovery_auc: invalid ground-truth edge");
    planted.insert({std::min(i, j), std::max(i, j)});
  }
  std::vector<double> scores;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < map.n; ++i)
    for (std::size_t j = i + 1; j < map.n; ++j) {
      scores.push_back(map.scores(i, j));
      labels.push_back(planted.count({i, j}) ? 1 : 0);
    }
  const auto auc = roc_auc(scores, labels);
  if (!auc) throw Error(ErrorCode::kInvalidArgument, "recovery_auc: ground truth covers every pair");
  return *auc;
}

GroupBlocks group_block_means(const EdgeScoreMap& map) {
  GroupBlocks out;
  std::vector<std::size_t> gid(map.n);
  for (std::size_t i = 0; i < map.n; ++i) {
    const std::string g = group_of(map, i);
    auto it = std::find(out.groups.begin(), out.groups.end(), g);
    if (it == out.groups.end()) it = out.groups.insert(out.groups.end(), g);
    gid[i] = static_cast<std::size_t>(it - out.groups.begin());
  }
  const std::size_t g = out.groups.size();
  out.means = Matrix(g, g);
  Matrix counts(g, g);
  for (std::size_t i = 0; i < map.n; ++i)
    for (std::size_t j = 0; j < map.n; ++j) {
      if (i == j) continue;
      out.means(gid[i], gid[j]) += map.scores(i, j);
      counts(gid[i], gid[j]) += 1.0;
    }
  for (std::size_t i = 0; i < out.means.size(); ++i)
    if (counts[i] > 0.0) out.means[i] /= counts[i];
  return out;
}

std::string score_map_csv(const EdgeScoreMap& map) { return data::matrix_to_csv(map.scores); }

std::string score_map_summary_json(const EdgeScoreMap& map, const TopEdges& top) {
  using nlohmann::json;
  const GroupBlocks blocks = group_block_means(map);
  json means = json::array();
  for (std::size_t a = 0; a < blocks.groups.size(); ++a) {
    json row = json::array();
    for (std::size_t b = 0; b < blocks.groups.size(); ++b) row.push_back(blocks.means(a, b));
    means.push_back(std::move(row));
  }
  json edges = json::array();
  for (const RankedEdge& e : top.edges)
    edges.push_back({{"i", e.i}, {"j", e.j}, {"score", e.score}, {"group_i", e.group_i}, {"group_j", e.group_j}});
  const json doc = {{"subject_count", map.subject_count},
                    {"n", map.n},
                    {"group_block_means", {{"groups", blocks.groups}, {"means", means}}},
                    {"top_k", edges},
                    {"top_k_short", top.short_list}};
  return doc.dump(2) + "\n";
}

}  // namespace brainood::interpret
