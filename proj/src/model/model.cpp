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

#include "brainood/model/model.hpp"

#include <cmath>
#include <string>

#include "brainood/common/error.hpp"
#include "brainood/model/selector.hpp"

namespace brainood::model {

std::size_t TensorStore::add(std::string name, Matrix value) {
  if (find(name)) throw Error(ErrorCode::kInternal, "duplicate tensor name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return names_.size() - 1;
}

std::optional<std::size_t> TensorStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

const Matrix& TensorStore::at(const std::string& name) const {
  const auto i = find(name);
  if (!i) throw Error(ErrorCode::kNotFound, "no tensor named " + name);
  return values_[*i];
}

Batch make_batch(std::span<const data::BrainNetwork* const> networks) {
  if (networks.empty()) throw Error(ErrorCode::kInvalidArgument, "make_batch: no subjects");
  Batch b;
  b.blocks = networks.size();
  b.n = networks.front()->features.rows();
  b.features = Matrix(b.blocks * b.n, b.n);
  b.adjacency = Matrix(b.blocks * b.n, b.n);
  auto labels = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t i = 0; i < networks.size(); ++i) {
    const data::BrainNetwork& net = *networks[i];
    if (net.features.rows() != b.n || net.features.cols() != b.n || !net.adjacency.same_shape(net.features))
      throw ShapeError("make_batch: subject " + net.subject_id + " has shape " + net.features.shape_string());
    std::copy(net.features.data(), net.features.data() + net.features.size(), b.features.data() + i * b.n * b.n);
    std::copy(net.adjacency.data(), net.adjacency.data() + net.adjacency.size(), b.adjacency.data() + i * b.n * b.n);
    labels->push_back(net.label);
  }
  b.labels = std::move(labels);
  b.edges = build_edge_index(b.adjacency, b.blocks);
  return b;
}

Batch make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<const data::BrainNetwork*> nets;
  nets.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw Error(ErrorCode::kNotFound, "make_batch: subject index out of range");
    nets.push_back(&dataset.networks()[i]);
  }
  return make_batch(nets);
}

ad::Var total_loss(const LossTerms& terms, const TrainConfig& cfg) {
  ad::Var total = terms.cls;
  if (terms.entropy && cfg.entropy_active()) total = ad::add(total, ad::scale(*terms.entropy, cfg.lambda1));
  if (terms.recon && cfg.recon_active()) total = ad::add(total, ad::scale(*terms.recon, cfg.lambda2));
  if (terms.align && cfg.align_active()) total = ad::add(total, ad::scale(*terms.align, cfg.lambda3));
  return total;
}

double total_loss(double cls, double entropy, double recon, double align, const TrainConfig& cfg) {
  double total = cls;
  if (cfg.entropy_active()) total += cfg.lambda1 * entropy;
  if (cfg.recon_active()) total += cfg.lambda2 * recon;
  if (cfg.align_active()) total += cfg.lambda3 * align;
  return total;
}

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, double bound, std::uint64_t seed, const std::string& name) {
  Rng rng = make_rng(seed, "init/" + name);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

}  // namespace

std::size_t BrainOODModel::add_linear_weight(const std::string& name, std::size_t in, std::size_t out,
                                             std::size_t fan_in) {
  return params_.add(name, uniform_init(in, out, 1.0 / std::sqrt(static_cast<double>(fan_in)), cfg_.seed, name));
}

void BrainOODModel::add_gin(GinSlots& slots, const std::string& prefix) {
  slots.prefix = prefix;
  const std::size_t d = cfg_.hidden_dim;
  for (std::size_t l = 0; l < cfg_.gin_layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l) + ".";
    const std::size_t in = l == 0 ? n_ : d;
    slots.lin1_w.push_back(add_linear_weight(p + "lin1.weight", in, d, in));
    slots.lin1_b.push_back(add_linear_weight(p + "lin1.bias", 1, d, in));
    slots.lin2_w.push_back(add_linear_weight(p + "lin2.weight", d, d, d));
    slots.lin2_b.push_back(add_linear_weight(p + "lin2.bias", 1, d, d));
    slots.eps.push_back(params_.add(p + "eps", Matrix(1, 1)));
    Matrix ones(1, d);
    for (double& x : ones.values()) x = 1.0;
    slots.gamma.push_back(params_.add(p + "bn.weight", std::move(ones)));
    slots.beta.push_back(params_.add(p + "bn.bias", Matrix(1, d)));
    Matrix running(2, d);
    for (std::size_t c = 0; c < d; ++c) running(1, c) = 1.0;
    slots.running.push_back(buffers_.add(p + "bn.running", std::move(running)));
  }
}

BrainOODModel::BrainOODModel(std::size_t n, std::size_t classes, const TrainConfig& cfg)
    : n_(n), classes_(classes), cfg_(cfg) {
  cfg_.validate();
  if (n < 2 || classes < 2)
    throw Error(ErrorCode::kInvalidArgument, "model needs n >= 2 nodes and at least 2 classes");
  const std::size_t d = cfg_.hidden_dim;
  add_gin(gin_, "gin");
  head_w_ = add_linear_weight("head.weight", d, classes, d);
  head_b_ = add_linear_weight("head.bias", 1, classes, d);
  if (cfg_.separate_classifier()) add_gin(cls_gin_, "cls_gin");
  if (cfg_.use_mask)
    mask_w_ = params_.add("mask.weight",
                          uniform_init(n, d, std::sqrt(3.0 / static_cast<double>(d)), cfg_.seed, "mask.weight"));
  if (cfg_.recon_active()) hpgnn_w_ = add_linear_weight("hpgnn.weight", d, d, d);
  if (cfg_.use_sampler) {
    scorer_w1_ = add_linear_weight("scorer.lin1.weight", 2 * d, d, 2 * d);
    scorer_b1_ = add_linear_weight("scorer.lin1.bias", 1, d, 2 * d);
    scorer_w2_ = add_linear_weight("scorer.lin2.weight", d, 1, d);
    scorer_b2_ = add_linear_weight("scorer.lin2.bias", 1, 1, d);
  }
}

std::vector<ad::Var> BrainOODModel::bind(ad::Tape& tape) const {
  std::vector<ad::Var> vars;
  vars.reserve(params_.size());
  for (const Matrix& m : params_.values()) vars.push_back(tape.variable(m));
  return vars;
}

GinParams BrainOODModel::gin_params(const GinSlots& slots, std::span<const ad::Var> vars, const ad::Tape&) const {
  GinParams p;
  p.dropout = cfg_.gin_dropout;
  for (std::size_t l = 0; l < slots.lin1_w.size(); ++l) {
    GinLayerParams layer;
    layer.lin1_w = vars[slots.lin1_w[l]];
    layer.lin1_b = vars[slots.lin1_b[l]];
    layer.lin2_w = vars[slots.lin2_w[l]];
    layer.lin2_b = vars[slots.lin2_b[l]];
    layer.epsilon = vars[slots.eps[l]];
    layer.bn_gamma = vars[slots.gamma[l]];
    layer.bn_beta = vars[slots.beta[l]];
    layer.bn_running = std::make_shared<const Matrix>(buffers_.value(slots.running[l]));
    p.layers.push_back(std::move(layer));
  }
  return p;
}

ad::Var BrainOODModel::head(ad::Var pooled, std::span<const ad::Var> vars) const {
  return ad::add(ad::matmul(pooled, vars[head_w_]), vars[head_b_]);
}

ForwardResult BrainOODModel::forward(ad::Tape& tape, std::span<const ad::Var> vars, const Batch& batch,
                                     const ForwardOptions& options, Rng& rng) const {
  if (vars.size() != params_.size())
    throw Error(ErrorCode::kInvalidArgument, "forward: expected " + std::to_string(params_.size()) +
                                                 " parameter variables, got " + std::to_string(vars.size()));
  if (batch.n != n_) throw ShapeError("forward: batch has n=" + std::to_string(batch.n) + ", model n=" + std::to_string(n_));
  for (std::size_t y : *batch.labels)
    if (y >= classes_) throw Error(ErrorCode::kData, "forward: label " + std::to_string(y) + " out of range");

  const std::size_t blocks = batch.blocks;
  const Mode mode = options.mode;
  ForwardResult out;
  std::vector<BatchNormObservation> observed;

  const ad::Var x = tape.constant(batch.features);
  const ad::Var a = tape.constant(batch.adjacency);
  ad::Var x_in = x;
  std::optional<ad::Var> mask;
  if (cfg_.use_mask) {
    const MaskOutput m = apply_mask(x, {vars[mask_w_], cfg_.feature_dropout}, blocks, mode, rng);
    x_in = m.x_masked;
    mask = m.mask;
    out.mask_base = m.mask_base;
  }

  const GinParams gin = gin_params(gin_, vars, tape);
  auto encode = [&](const GinSlots& slots, const GinParams& p, ad::Var feats, ad::Var weights) {
    const std::size_t first = observed.size();
    ad::Var h = gin_encode(feats, weights, p, blocks, mode, rng, &observed);
    for (std::size_t i = first; i < observed.size(); ++i) out.bn_observed_buffer.push_back(slots.running[observed[i].layer]);
    return h;
  };
  const ad::Var h = encode(gin_, gin, x_in, a);

  if (cfg_.recon_active()) {
    const ad::Var h_hat = hpgnn_encode(h, batch.adjacency, {vars[hpgnn_w_]}, blocks);
    if (!mask) {
      Matrix ones(blocks * n_, n_);
      for (double& v : ones.values()) v = 1.0;
      mask = tape.constant(std::move(ones));
    }
    out.x_hat = reconstruct(h_hat, *mask, blocks);
    out.recon = recon_loss(*out.x_hat, x_in, blocks);
  }

  if (!cfg_.use_sampler) {
    out.logits = head(ad::block_col_sum(h, blocks), vars);
    out.round_logits.push_back(out.logits);
  } else {
    const ScorerParams scorer{vars[scorer_w1_], vars[scorer_b1_], vars[scorer_w2_], vars[scorer_b2_]};
    out.alpha = score_edges(h, batch.edges, scorer);
    SampleMode sampling = mode == Mode::kTrain ? SampleMode::kSoft : options.eval_sampling;
    const std::size_t rounds = sampling == SampleMode::kNoiseFree ? 1 : cfg_.k;
    const GinSlots& cls_slots = cfg_.share_encoder ? gin_ : cls_gin_;
    const GinParams cls_gin = cfg_.share_encoder ? gin : gin_params(cls_gin_, vars, tape);
    const ad::Var x_pred = cfg_.use_raw_x ? x : x_in;
    std::optional<ad::Var> summed;
    for (std::size_t r = 0; r < rounds; ++r) {
      out.samples.push_back(concrete_sample(*out.alpha, batch.edges, cfg_.tau, rng, sampling));
      const SampledSubgraph& s = out.samples.back();
      ad::Var weights = s.gamma;
      if (cfg_.use_raw_a) weights = a;
      else if (sampling == SampleMode::kHard) weights = tape.constant(s.hard);
      const ad::Var logits = head(ad::block_col_sum(encode(cls_slots, cls_gin, x_pred, weights), blocks), vars);
      out.round_logits.push_back(logits);
      summed = summed ? ad::add(*summed, logits) : logits;
    }
    out.logits = rounds == 1 ? *summed : ad::scale(*summed, 1.0 / static_cast<double>(rounds));
    if (cfg_.align_active()) {
      std::vector<ad::Var> gammas;
      for (const SampledSubgraph& s : out.samples) gammas.push_back(s.gamma);
      out.align = align_loss(gammas, n_);
    }
  }

  if (cfg_.entropy_active()) out.entropy = entropy_loss(*out.mask_base);
  out.cls = ad::softmax_cross_entropy(out.logits, batch.labels);
  out.total = total_loss({out.cls, out.entropy, out.recon, out.align}, cfg_);
  out.bn_observed = std::move(observed);
  return out;
}

void BrainOODModel::update_running_stats(const ForwardResult& result) {
  for (std::size_t i = 0; i < result.bn_observed.size(); ++i) {
    Matrix& running = buffers_.value(result.bn_observed_buffer[i]);
    const BatchNormObservation& obs = result.bn_observed[i];
    for (std::size_t c = 0; c < running.cols(); ++c) {
      running(0, c) = (1.0 - kBnMomentum) * running(0, c) + kBnMomentum * obs.mean(0, c);
      running(1, c) = (1.0 - kBnMomentum) * running(1, c) + kBnMomentum * obs.unbiased_var(0, c);
    }
  }
}

}  // namespace brainood::model
