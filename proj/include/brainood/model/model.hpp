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
#include <span>
#include <string>
#include <vector>

#include "brainood/braindata/network.hpp"
#include "brainood/common/rng.hpp"
#include "brainood/diffcore/tape.hpp"
#include "brainood/model/encoders.hpp"
#include "brainood/model/extractor.hpp"
#include "brainood/trainer/config.hpp"

namespace brainood::model {

/// Named tensors in a fixed declaration order.
class TensorStore {
 public:
  std::size_t add(std::string name, Matrix value);
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  std::vector<Matrix>& values() { return values_; }
  const std::vector<Matrix>& values() const { return values_; }
  std::optional<std::size_t> find(const std::string& name) const;
  const Matrix& at(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// Stacked inputs for B subjects.
struct Batch {
  std::size_t blocks = 0;
  std::size_t n = 0;
  Matrix features;   // (B·n)×n
  Matrix adjacency;  // (B·n)×n
  std::shared_ptr<const std::vector<std::size_t>> labels;
  EdgeIndex edges;
};

Batch make_batch(std::span<const data::BrainNetwork* const> networks);
Batch make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices);

struct ForwardOptions {
  Mode mode = Mode::kTrain;
  /// Evaluation sampling: noise-free collapses the k rounds into one pass.
  SampleMode eval_sampling = SampleMode::kNoiseFree;
};

struct ForwardResult {
  ad::Var logits;  // B×C, averaged over rounds
  std::vector<ad::Var> round_logits;
  ad::Var cls;
  std::optional<ad::Var> entropy;
  std::optional<ad::Var> recon;
  std::optional<ad::Var> align;
  ad::Var total;
  std::optional<ad::Var> mask_base;
  std::optional<ad::Var> x_hat;
  std::optional<ad::Var> alpha;          // E×1
  std::vector<SampledSubgraph> samples;  // one per round
  std::vector<BatchNormObservation> bn_observed;
  std::vector<std::size_t> bn_observed_buffer;  // buffer slot per observation
};

struct LossTerms {
  ad::Var cls;
  std::optional<ad::Var> entropy;
  std::optional<ad::Var> recon;
  std::optional<ad::Var> align;
};

/// L_cls + λ1·L_entropy + λ2·L_recon + λ3·L_align over the terms the config enables.
ad::Var total_loss(const LossTerms& terms, const TrainConfig& cfg);
double total_loss(double cls, double entropy, double recon, double align, const TrainConfig& cfg);

/// All learnable tensors plus batch-norm running statistics.
///
/// Random draws inside one training forward pass happen in this order: feature
/// mask dropout (one symmetric pattern per subject), scoring-pass GIN dropout,
/// then for each round the edge noise U followed by classifier-pass GIN dropout.
class BrainOODModel {
 public:
  BrainOODModel(std::size_t n, std::size_t classes, const TrainConfig& cfg);

  std::size_t node_count() const { return n_; }
  std::size_t class_count() const { return classes_; }
  const TrainConfig& config() const { return cfg_; }

  TensorStore& params() { return params_; }
  const TensorStore& params() const { return params_; }
  /// "…bn.running" buffers, 2×d each: running mean and running variance.
  TensorStore& buffers() { return buffers_; }
  const TensorStore& buffers() const { return buffers_; }

  /// Leaf variables for every parameter, in store order.
  std::vector<ad::Var> bind(ad::Tape& tape) const;

  ForwardResult forward(ad::Tape& tape, std::span<const ad::Var> params, const Batch& batch,
                        const ForwardOptions& options, Rng& rng) const;

  /// Folds training-mode batch statistics into the running buffers (momentum 0.1).
  void update_running_stats(const ForwardResult& result);

  static constexpr double kBnMomentum = 0.1;

 private:
  struct GinSlots {
    std::string prefix;
    std::vector<std::size_t> lin1_w, lin1_b, lin2_w, lin2_b, eps, gamma, beta, running;
  };

  void add_gin(GinSlots& slots, const std::string& prefix);
  std::size_t add_linear_weight(const std::string& name, std::size_t in, std::size_t out, std::size_t fan_in);
  GinParams gin_params(const GinSlots& slots, std::span<const ad::Var> vars, const ad::Tape& tape) const;
  ad::Var head(ad::Var pooled, std::span<const ad::Var> vars) const;

  std::size_t n_;
  std::size_t classes_;
  TrainConfig cfg_;
  TensorStore params_;
  TensorStore buffers_;
  GinSlots gin_;
  GinSlots cls_gin_;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::size_t mask_w_ = 0;
  std::size_t hpgnn_w_ = 0;
  std::size_t scorer_w1_ = 0, scorer_b1_ = 0, scorer_w2_ = 0, scorer_b2_ = 0;
};

}  // namespace brainood::model
