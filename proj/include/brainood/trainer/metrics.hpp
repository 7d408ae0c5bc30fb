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
#include <vector>

namespace brainood {

/// Classification metrics for one subject group. For binary tasks precision,
/// recall and f1_positive refer to class 1; with more classes they are macro
/// averages. micro_f1 is micro-averaged over classes (equal to accuracy for
/// single-label predictions). Undefined ratios (no predicted or no actual
/// positives) count as 0.
struct Metrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_positive = 0.0;
  double micro_f1 = 0.0;
  /// Binary tasks with both classes present only.
  std::optional<double> roc_auc;
  double mean_loss = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

struct MetricsReport {
  Metrics overall;
  std::optional<Metrics> id;
  std::optional<Metrics> ood;
};

/// `probabilities` is row-major count×classes (softmax of the logits); `losses`
/// holds the per-subject cross-entropy.
Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const double> probabilities,
                        std::span<const double> losses, std::size_t classes);

/// Mann–Whitney estimate of P(score_pos > score_neg), ties counting one half.
/// Returns nullopt unless both classes occur.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::size_t> labels);

struct MeanStd {
  double mean = 0.0;
  /// Sample standard deviation (n − 1); nullopt for fewer than two values.
  std::optional<double> std;
};

MeanStd mean_std(std::span<const double> values);

}  // namespace brainood
