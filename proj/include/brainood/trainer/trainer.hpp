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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "brainood/braindata/network.hpp"
#include "brainood/braindata/splits.hpp"
#include "brainood/model/model.hpp"
#include "brainood/trainer/checkpoint.hpp"
#include "brainood/trainer/config.hpp"
#include "brainood/trainer/metrics.hpp"

namespace brainood {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over the epoch's batches
  double train_cls = 0.0;
  std::optional<Metrics> val_id;
  std::optional<Metrics> val_ood;
  Metrics val_overall;
};

struct TrainOptions {
  /// Stop after this many optimiser steps (0 = run every epoch).
  std::size_t max_steps = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  /// Best validation accuracy on the in-distribution, held-out-site and full
  /// validation subsets; ties go to the lower validation loss, then the earlier epoch.
  std::optional<Checkpoint> best_id;
  std::optional<Checkpoint> best_ood;
  std::optional<Checkpoint> best_overall;
  std::vector<EpochRecord> history;
  /// Total loss of every optimiser step, in order.
  std::vector<double> step_losses;
};

/// Trains on fold.train_ids, validating on fold.val_ids after every epoch.
/// Shuffling draws from derive_seed(cfg.seed, "train/shuffle"), dropout and
/// sampling noise from derive_seed(cfg.seed, "train/noise").
TrainResult train(const data::Dataset& dataset, const data::Fold& fold, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Freshly initialised model state, exactly as train() starts from it.
Checkpoint initial_checkpoint(const data::Dataset& dataset, const TrainConfig& cfg, const std::string& ood_site);

/// Per-subject evaluation outputs in the order of `subject_ids`.
struct Predictions {
  std::vector<std::string> subject_ids;
  std::vector<std::size_t> labels;
  std::vector<std::string> sites;
  std::vector<double> probabilities;  // row-major count×classes
  std::vector<double> losses;
};

Predictions predict(const model::BrainOODModel& model, const data::Dataset& dataset,
                    const std::vector<std::string>& subject_ids,
                    model::SampleMode sampling = model::SampleMode::kNoiseFree, std::uint64_t sampling_seed = 0);

/// Metrics over `subject_ids`, grouped by whether a subject's site is `ood_site`.
MetricsReport report_for(const Predictions& predictions, const std::string& ood_site, std::size_t classes);

/// Deterministic evaluation of a checkpoint; unknown ids raise Error(kNotFound).
MetricsReport evaluate(const Checkpoint& ckpt, const data::Dataset& dataset, const std::vector<std::string>& subject_ids,
                       model::SampleMode sampling = model::SampleMode::kNoiseFree);

struct FoldResult {
  std::size_t fold = 0;
  std::string ood_site;
  /// Accuracy on ID test subjects under the best-ID-val checkpoint.
  double id_acc = 0.0;
  /// Accuracy on OOD test subjects under the best-OOD-val checkpoint.
  double ood_acc = 0.0;
  /// Accuracy on all test subjects under the best-overall-val checkpoint.
  double overall_acc = 0.0;
  MetricsReport id_selection;
  MetricsReport ood_selection;
  MetricsReport overall_selection;
  std::size_t id_epoch = 0, ood_epoch = 0, overall_epoch = 0;
};

struct CvResult {
  std::vector<FoldResult> folds;
};

struct CvOptions {
  std::size_t jobs = 1;
  /// Called with each fold's training result (checkpoint export etc.).
  std::function<void(std::size_t fold, const TrainResult&)> on_fold;
};

/// Configuration fold k trains with: the seed becomes derive_seed(cfg.seed, k).
TrainConfig fold_config(const TrainConfig& cfg, std::size_t k);

/// Scores a trained fold on its test subjects under the three selected checkpoints
/// (each falls back to the best-overall one, then the final one).
FoldResult fold_result(const data::Dataset& dataset, const data::Fold& fold, std::size_t k, const TrainResult& tr);

/// Fold k trains with seed derive_seed(cfg.seed, k); folds may run in parallel and
/// are reported in plan order.
CvResult run_cv(const data::Dataset& dataset, const data::SplitPlan& plan, const TrainConfig& cfg,
                const CvOptions& options = {});

/// Results document: {folds: [...], aggregate: {mean: {...}, std: {...}}}.
std::string cv_result_to_json(const CvResult& result);
std::string metrics_report_to_json(const MetricsReport& report);
/// Reads back the per-fold accuracy columns (metrics blocks are not restored).
CvResult cv_result_from_json(const std::string& text);

/// Columns of the aggregate row.
std::vector<std::string> cv_columns();
double cv_column(const FoldResult& fold, const std::string& column);

}  // namespace brainood
