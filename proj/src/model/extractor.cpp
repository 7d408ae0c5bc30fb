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

#include "brainood/model/extractor.hpp"

#include <cmath>
#include <string>

#include "brainood/common/error.hpp"

namespace brainood::model {

EdgeIndex build_edge_index(const Matrix& adjacency_stack, std::size_t blocks) {
  const std::size_t n = adjacency_stack.cols();
  if (blocks == 0 || adjacency_stack.rows() != n * blocks)
    throw ShapeError("build_edge_index: adjacency stack " + adjacency_stack.shape_string() + " is not " +
                     std::to_string(blocks) + " square blocks");
  EdgeIndex idx;
  idx.n = n;
  idx.blocks = blocks;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t u = v + 1; u < n; ++u)
        if (adjacency_stack(b * n + v, u) != 0.0) {
          idx.subject.push_back(b);
          idx.v.push_back(v);
          idx.u.push_back(u);
        }
  const std::size_t e = idx.edge_count();
  auto first = std::make_shared<std::vector<std::size_t>>(2 * e);
  auto second = std::make_shared<std::vector<std::size_t>>(2 * e);
  auto pos = std::make_shared<std::vector<std::size_t>>(2 * e);
  for (std::size_t i = 0; i < e; ++i) {
    const std::size_t rv = idx.subject[i] * n + idx.v[i];
    const std::size_t ru = idx.subject[i] * n + idx.u[i];
    (*first)[i] = rv;
    (*second)[i] = ru;
    (*first)[e + i] = ru;
    (*second)[e + i] = rv;
    (*pos)[2 * i] = rv * n + idx.u[i];
    (*pos)[2 * i + 1] = ru * n + idx.v[i];
  }
  idx.first_rows = std::move(first);
  idx.second_rows = std::move(second);
  idx.positions = std::move(pos);
  return idx;
}

ad::Var score_edges(ad::Var h, const EdgeIndex& edges, const ScorerParams& params) {
  const std::size_t d = h.cols();
  if (h.rows() != edges.n * edges.blocks || params.w1.rows() != 2 * d || params.w2.rows() != params.w1.cols() ||
      params.w2.cols() != 1)
    throw ShapeError("score_edges: representations " + h.value().shape_string() + " vs scorer " +
                     params.w1.value().shape_string() + ", " + params.w2.value().shape_string());
  const std::size_t e = edges.edge_count();
  // [H_v | H_u]·W1 = H_v·W1[:d] + H_u·W1[d:], evaluated once per node.
  const ad::Var p = ad::matmul(h, ad::slice_rows(params.w1, 0, d));
  const ad::Var q = ad::matmul(h, ad::slice_rows(params.w1, d, d));
  const ad::Var pre = ad::add(ad::gather_rows(p, edges.first_rows), ad::gather_rows(q, edges.second_rows));
  const ad::Var hidden = ad::relu(ad::add(pre, params.b1));
  const ad::Var s = ad::add(ad::matmul(hidden, params.w2), params.b2);
  return ad::scale(ad::add(ad::slice_rows(s, 0, e), ad::slice_rows(s, e, e)), 0.5);
}

ad::Var edges_to_stack(ad::Var edge_values, const EdgeIndex& edges) {
  return ad::scatter(edge_values, edges.positions, 2, edges.n * edges.blocks, edges.n);
}

SampledSubgraph concrete_sample(ad::Var alpha, const EdgeIndex& edges, double tau, Rng& rng, SampleMode mode) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw DomainError("concrete_sample: temperature must be positive, got " + std::to_string(tau));
  if (alpha.rows() != edges.edge_count() || alpha.cols() != 1)
    throw ShapeError("concrete_sample: scores " + alpha.value().shape_string() + " for " +
                     std::to_string(edges.edge_count()) + " edges");
  SampledSubgraph out;
  out.tau = tau;
  ad::Var logits = alpha;
  if (mode != SampleMode::kNoiseFree) {
    Matrix noise(alpha.rows(), 1);
    for (double& x : noise.values()) {
      const double u = uniform_open(rng);
      x = std::log(u) - std::log1p(-u);
    }
    logits = ad::add(logits, alpha.tape->constant(std::move(noise)));
  }
  out.gamma_edges = ad::sigmoid(ad::scale(logits, 1.0 / tau));
  out.gamma = edges_to_stack(out.gamma_edges, edges);
  if (mode == SampleMode::kHard) {
    out.hard = Matrix(edges.n * edges.blocks, edges.n);
    const Matrix& g = out.gamma_edges.value();
    for (std::size_t i = 0; i < edges.edge_count(); ++i) {
      if (uniform_open(rng) >= g.data()[i]) continue;
      out.hard.data()[(*edges.positions)[2 * i]] = 1.0;
      out.hard.data()[(*edges.positions)[2 * i + 1]] = 1.0;
    }
  }
  return out;
}

ad::Var align_loss(std::span<const ad::Var> samples, std::size_t n) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "align_loss: empty batch");
  for (const ad::Var& s : samples)
    if (n == 0 || s.cols() != n || s.rows() % n != 0)
      throw ShapeError("align_loss: sample " + s.value().shape_string() + " is not a stack of " + std::to_string(n) +
                       "x" + std::to_string(n) + " blocks");
  const ad::Var stacked = samples.size() == 1 ? samples[0] : ad::concat_rows(samples);
  const std::size_t count = stacked.rows() / n;
  const double inv = 1.0 / static_cast<double>(count);
  // Shifting by the first sample leaves the spread unchanged and makes an
  // identical batch produce exact zeros.
  const ad::Var all = ad::sub(stacked, ad::tile_rows(ad::slice_rows(stacked, 0, n), count));
  const ad::Var mean = ad::scale(ad::block_sum(all, count), inv);
  const ad::Var dev = ad::sub(all, ad::tile_rows(mean, count));
  const ad::Var var = ad::scale(ad::block_sum(ad::square(dev), count), inv);
  return ad::scale(ad::sum(ad::sqrt(var)), 1.0 / static_cast<double>(n * n));
}

}  // namespace brainood::model
