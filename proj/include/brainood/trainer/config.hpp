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
#include <cstdint>

namespace brainood {

/// Every training hyperparameter. Defaults follow the published BrainOOD settings
/// for ABIDE-style data; tau is a free choice.
struct TrainConfig {
  double lambda1 = 0.01;  // entropy
  double lambda2 = 0.1;   // reconstruction
  double lambda3 = 0.5;   // alignment
  double tau = 1.0;
  std::size_t k = 5;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double feature_dropout = 0.2;
  double gin_dropout = 0.5;
  std::size_t hidden_dim = 100;
  std::size_t gin_layers = 2;
  std::uint64_t seed = 0;

  bool use_mask = true;
  bool use_sampler = true;
  bool use_entropy = true;
  bool use_recon = true;
  bool use_align = true;
  bool share_encoder = true;
  /// Classifier pass reads the unmasked X instead of X′.
  bool use_raw_x = false;
  /// Classifier pass aggregates over the full adjacency instead of the sampled graph.
  bool use_raw_a = false;

  void validate() const;

  bool entropy_active() const { return use_mask && use_entropy && lambda1 > 0.0; }
  bool recon_active() const { return use_recon && lambda2 > 0.0; }
  bool align_active() const { return use_sampler && use_align && lambda3 > 0.0; }
  /// A separate classifier GIN exists only when sampling is on and sharing is off.
  bool separate_classifier() const { return use_sampler && !share_encoder; }
};

/// Calls f(name, field) for every field; the names are the config-file keys.
template <typename Config, typename F>
void for_each_field(Config& cfg, F&& f) {
  f("lambda1", cfg.lambda1);
  f("lambda2", cfg.lambda2);
  f("lambda3", cfg.lambda3);
  f("tau", cfg.tau);
  f("k", cfg.k);
  f("lr", cfg.lr);
  f("batch_size", cfg.batch_size);
  f("epochs", cfg.epochs);
  f("feature_dropout", cfg.feature_dropout);
  f("gin_dropout", cfg.gin_dropout);
  f("hidden_dim", cfg.hidden_dim);
  f("gin_layers", cfg.gin_layers);
  f("seed", cfg.seed);
  f("use_mask", cfg.use_mask);
  f("use_sampler", cfg.use_sampler);
  f("use_entropy", cfg.use_entropy);
  f("use_recon", cfg.use_recon);
  f("use_align", cfg.use_align);
  f("share_encoder", cfg.share_encoder);
  f("use_raw_x", cfg.use_raw_x);
  f("use_raw_a", cfg.use_raw_a);
}

/// Plain ERM/GIN reference: no mask, no sampler, no auxiliary terms.
TrainConfig erm_baseline(TrainConfig cfg);


}  // namespace brainood
