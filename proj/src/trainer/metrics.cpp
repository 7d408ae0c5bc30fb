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

#include "brainood/trainer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "brainood/common/error.hpp"

namespace brainood {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1(double precision, double recall) { return ratio(2.0 * precision * recall, precision + recall); }

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  // Average ranks over tied scores, then the rank-sum form of the U statistic.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const double> probabilities,
                        std::span<const double> losses, std::size_t classes) {
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "compute_metrics: need at least two classes");
  if (probabilities.size() != labels.size() * classes || losses.size() != labels.size())
    throw ShapeError("compute_metrics: inconsistent prediction sizes");
  Metrics m;
  m.count = labels.size();
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::vector<double> positive_scores;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw Error(ErrorCode::kData, "compute_metrics: label out of range");
    const double* p = probabilities.data() + i * classes;
    const std::size_t pred = static_cast<std::size_t>(std::max_element(p, p + classes) - p);
    ++m.confusion[labels[i]][pred];
    positive_scores.push_back(p[classes - 1]);
    m.mean_loss += losses[i];
  }
  if (m.count == 0) return m;
  const double total = static_cast<double>(m.count);
  m.mean_loss /= total;

  double correct = 0.0;
  std::vector<double> prec(classes), rec(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double predicted = 0.0, actual = 0.0;
    for (std::size_t r = 0; r < classes; ++r) {
      predicted += static_cast<double>(m.confusion[r][c]);
      actual += static_cast<double>(m.confusion[c][r]);
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    correct += tp;
    prec[c] = ratio(tp, predicted);
    rec[c] = ratio(tp, actual);
  }
  m.accuracy = correct / total;
  m.micro_f1 = m.accuracy;
  if (classes == 2) {
    m.precision = prec[1];
    m.recall = rec[1];
    m.f1_positive = f1(prec[1], rec[1]);
    m.roc_auc = roc_auc(positive_scores, labels);
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      m.precision += prec[c] / static_cast<double>(classes);
      m.recall += rec[c] / static_cast<double>(classes);
      m.f1_positive += f1(prec[c], rec[c]) / static_cast<double>(classes);
    }
  }
  return m;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace brainood
