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

#include <cmath>
#include <string>
#include <vector>

#include "brainood/braindata/splits.hpp"
#include "brainood/braindata/synthetic.hpp"
#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "brainood/trainer/trainer.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace brainood;

namespace {

data::Dataset small_dataset(std::size_t subjects_per_site = 12, std::uint64_t seed = 5) {
  data::SyntheticConfig sc;
  sc.n = 12;
  sc.sites = 3;
  sc.subjects_per_site = subjects_per_site;
  sc.seed = seed;
  const data::SyntheticDataset syn = data::generate_synthetic(sc);
  return data::build_dataset(syn.manifest, syn.matrices);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 8;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.k = 2;
  cfg.lr = 1e-2;
  cfg.seed = 11;
  return cfg;
}

data::Fold first_fold(const data::Dataset& ds) {
  return data::make_splits(ds.manifest().entries, {"site0"}, {2, 1, 1}, 3).folds.at(0);
}

std::vector<double> probabilities_for(const std::vector<std::size_t>& predicted, std::size_t classes) {
  std::vector<double> p;
  for (std::size_t y : predicted)
    for (std::size_t c = 0; c < classes; ++c) p.push_back(c == y ? 0.9 : 0.1 / static_cast<double>(classes - 1));
  return p;
}

}  // namespace

TEST_CASE("binary metrics from a fixed confusion matrix") {
  // TP = 2, FN = 1, FP = 1, TN = 2.
  const std::vector<std::size_t> labels{1, 1, 1, 0, 0, 0};
  const std::vector<std::size_t> predicted{1, 1, 0, 1, 0, 0};
  const std::vector<double> losses(6, 0.5);
  const Metrics m = compute_metrics(labels, probabilities_for(predicted, 2), losses, 2);
  CHECK(m.confusion[1][1] == 2);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[0][0] == 2);
  CHECK(std::fabs(m.accuracy - 4.0 / 6.0) < 1e-15);
  CHECK(std::fabs(m.precision - 2.0 / 3.0) < 1e-15);
  CHECK(std::fabs(m.recall - 2.0 / 3.0) < 1e-15);
  CHECK(std::fabs(m.f1_positive - 2.0 / 3.0) < 1e-15);
  CHECK(m.micro_f1 == m.accuracy);
  CHECK(m.mean_loss == 0.5);
}

TEST_CASE("perfect predictions score one everywhere") {
  const std::vector<std::size_t> labels{0, 1, 1, 0, 1};
  const Metrics m = compute_metrics(labels, probabilities_for(labels, 2), std::vector<double>(5, 0.1), 2);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1_positive == 1.0);
  CHECK(m.micro_f1 == 1.0);
  REQUIRE(m.roc_auc);
  CHECK(*m.roc_auc == 1.0);
}

TEST_CASE("rank-based AUC matches a pairwise count") {
  const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  CHECK(*roc_auc(scores, labels) == 0.75);

  Rng rng(51);
  std::uniform_int_distribution<int> bucket(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<std::size_t> y;
    for (int i = 0; i < 15; ++i) {
      s.push_back(0.25 * bucket(rng));  // many ties
      y.push_back(static_cast<std::size_t>(bucket(rng) % 2));
    }
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    const auto auc = roc_auc(s, y);
    if (pairs == 0.0) {
      CHECK_FALSE(auc);
    } else {
      REQUIRE(auc);
      CHECK(std::fabs(*auc - wins / pairs) < 1e-12);
    }
  }
}

TEST_CASE("metrics on three classes use macro averages") {
  const std::vector<std::size_t> labels{0, 1, 2, 2};
  const std::vector<std::size_t> predicted{0, 2, 2, 2};
  const Metrics m = compute_metrics(labels, probabilities_for(predicted, 3), std::vector<double>(4, 0.0), 3);
  CHECK(m.accuracy == 0.75);
  CHECK_FALSE(m.roc_auc);
  CHECK(std::fabs(m.recall - (1.0 + 0.0 + 1.0) / 3.0) < 1e-15);
  CHECK(std::fabs(m.precision - (1.0 + 0.0 + 2.0 / 3.0) / 3.0) < 1e-15);
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> v{60.0, 70.0};
  const MeanStd ms = mean_std(v);
  CHECK(ms.mean == 65.0);
  REQUIRE(ms.std);
  CHECK(std::fabs(*ms.std - 7.0710678118654755) < 1e-12);
  CHECK_FALSE(mean_std(std::vector<double>{1.0}).std);
}

TEST_CASE("training is deterministic per seed") {
  const data::Dataset ds = small_dataset();
  const data::Fold fold = first_fold(ds);
  const TrainResult a = train(ds, fold, quick_config());
  const TrainResult b = train(ds, fold, quick_config());
  CHECK(encode_checkpoint(a.final_checkpoint) == encode_checkpoint(b.final_checkpoint));
  CHECK(a.step_losses == b.step_losses);
  REQUIRE(a.best_overall);
  CHECK(encode_checkpoint(*a.best_overall) == encode_checkpoint(*b.best_overall));
  TrainConfig other = quick_config();
  other.seed = 12;
  CHECK(encode_checkpoint(train(ds, fold, other).final_checkpoint) != encode_checkpoint(a.final_checkpoint));
}

TEST_CASE("training tracks separate selections") {
  const data::Dataset ds = small_dataset();
  const data::Fold fold = first_fold(ds);
  const TrainResult r = train(ds, fold, quick_config());
  REQUIRE(r.history.size() == 3);
  REQUIRE(r.best_id);
  REQUIRE(r.best_ood);
  REQUIRE(r.best_overall);
  CHECK(r.best_id->selection->selection == "id");
  CHECK(r.best_ood->selection->selection == "ood");
  for (const auto& rec : r.history) {
    REQUIRE(rec.val_ood);
    CHECK(r.best_ood->selection->val_accuracy >= rec.val_ood->accuracy);
    CHECK(r.best_overall->selection->val_accuracy >= rec.val_overall.accuracy);
  }
  // Re-evaluating the selected checkpoint reproduces its recorded validation score.
  const MetricsReport again = evaluate(*r.best_ood, ds, fold.val_ids);
  CHECK(again.ood->accuracy == r.best_ood->selection->val_accuracy);
  CHECK(again.ood->mean_loss == r.best_ood->selection->val_loss);
}

TEST_CASE("empty split parts are rejected") {
  const data::Dataset ds = small_dataset();
  data::Fold fold = first_fold(ds);
  fold.val_ids.clear();
  CHECK_THROWS_AS(train(ds, fold, quick_config()), Error);
  fold = first_fold(ds);
  fold.train_ids.clear();
  CHECK_THROWS_AS(train(ds, fold, quick_config()), Error);
  fold = first_fold(ds);
  fold.train_ids.push_back("nobody");
  CHECK_THROWS_AS(train(ds, fold, quick_config()), Error);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const data::Dataset ds = small_dataset();
  const data::Fold fold = first_fold(ds);
  const TrainResult r = train(ds, fold, quick_config());
  const Checkpoint& c = *r.best_overall;
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "BOOD");
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  REQUIRE(back.params.size() == c.params.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) CHECK(back.params.value(i).bitwise_equal(c.params.value(i)));
  for (std::size_t i = 0; i < c.adam.m.size(); ++i) {
    CHECK(back.adam.m[i].bitwise_equal(c.adam.m[i]));
    CHECK(back.adam.v[i].bitwise_equal(c.adam.v[i]));
  }
  CHECK(back.adam.step == c.adam.step);
  CHECK(back.noise_rng_state == c.noise_rng_state);
  CHECK(back.selection->val_accuracy == c.selection->val_accuracy);

  testing::TempDir dir;
  save_checkpoint(dir.path() / "c.bood", c);
  const Checkpoint loaded = load_checkpoint(dir.path() / "c.bood");
  const MetricsReport before = evaluate(c, ds, fold.test_ids);
  const MetricsReport after = evaluate(loaded, ds, fold.test_ids);
  CHECK(before.overall.accuracy == after.overall.accuracy);
  CHECK(before.overall.mean_loss == after.overall.mean_loss);
  CHECK(before.overall.roc_auc == after.overall.roc_auc);
  CHECK(before.overall.confusion == after.overall.confusion);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const data::Dataset ds = small_dataset();
  const std::string bytes = encode_checkpoint(train(ds, first_fold(ds), quick_config()).final_checkpoint);
  CHECK_THROWS_AS(decode_checkpoint("XXXX" + bytes.substr(4)), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), Error);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), Error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/c.bood"), Error);
}

TEST_CASE("evaluation is deterministic and validates ids") {
  const data::Dataset ds = small_dataset();
  const data::Fold fold = first_fold(ds);
  const Checkpoint c = train(ds, fold, quick_config()).final_checkpoint;
  const MetricsReport a = evaluate(c, ds, fold.test_ids);
  const MetricsReport b = evaluate(c, ds, fold.test_ids);
  CHECK(a.overall.mean_loss == b.overall.mean_loss);
  CHECK(a.id.has_value());
  CHECK(a.ood.has_value());
  CHECK(a.id->count + a.ood->count == fold.test_ids.size());
  try {
    evaluate(c, ds, {"missing-subject"});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFound);
  }
  const MetricsReport hard = evaluate(c, ds, fold.test_ids, model::SampleMode::kHard);
  const MetricsReport hard2 = evaluate(c, ds, fold.test_ids, model::SampleMode::kHard);
  CHECK(hard.overall.mean_loss == hard2.overall.mean_loss);
}

TEST_CASE("cross-validation table and results file") {
  const data::Dataset ds = small_dataset();
  const data::SplitPlan plan = data::make_splits(ds.manifest().entries, {"site0", "site1"}, {2, 1, 1}, 3);
  TrainConfig cfg = quick_config();
  cfg.epochs = 2;
  const CvResult r = run_cv(ds, plan, cfg);
  REQUIRE(r.folds.size() == 2);
  CHECK(r.folds[1].ood_site == "site1");
  const std::string text = cv_result_to_json(r);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("folds").size() == 2);
  CHECK(j.at("aggregate").at("mean").at("ood_acc").get<double>() == (r.folds[0].ood_acc + r.folds[1].ood_acc) / 2.0);
  CHECK(j.at("aggregate").at("std").contains("overall_acc"));
  const CvResult back = cv_result_from_json(text);
  REQUIRE(back.folds.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back.folds[k].id_acc == r.folds[k].id_acc);
    CHECK(back.folds[k].ood_acc == r.folds[k].ood_acc);
    CHECK(back.folds[k].overall_acc == r.folds[k].overall_acc);
  }
  CHECK(cv_result_to_json(r) == text);

  CvOptions parallel;
  parallel.jobs = 2;
  CHECK(cv_result_to_json(run_cv(ds, plan, cfg, parallel)) == text);
}

TEST_CASE("overfits a tiny training set without auxiliary terms") {
  data::SyntheticConfig sc;
  sc.n = 12;
  sc.sites = 2;
  sc.subjects_per_site = 4;
  sc.seed = 8;
  const data::SyntheticDataset syn = data::generate_synthetic(sc);
  const data::Dataset ds = data::build_dataset(syn.manifest, syn.matrices);
  data::Fold fold;
  for (const auto& e : ds.manifest().entries) fold.train_ids.push_back(e.subject_id);
  fold.val_ids = fold.train_ids;
  fold.ood_site = "site1";
  TrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.epochs = 300;
  cfg.batch_size = 8;
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = 0.0;
  cfg.seed = 2;
  const TrainResult r = train(ds, fold, cfg);
  const double ce = evaluate(r.final_checkpoint, ds, fold.train_ids).overall.mean_loss;
  MESSAGE("final training cross-entropy " << ce);
  CHECK(ce < 0.05);
  CHECK(ce < 2.0 * 0.0060);
}

TEST_CASE("default configuration keeps every step finite for ten epochs") {
  const data::SyntheticDataset syn = data::generate_synthetic(data::SyntheticConfig{});
  const data::Dataset ds = data::build_dataset(syn.manifest, syn.matrices);
  const data::Fold fold = data::make_splits(ds.manifest().entries, {"site0"}, {2, 1, 1}, 0).folds.at(0);
  TrainConfig cfg;
  cfg.epochs = 10;
  const TrainResult r = train(ds, fold, cfg);
  CHECK(r.history.size() == 10);
  CHECK(r.step_losses.size() == 20);
  for (double l : r.step_losses) CHECK(std::isfinite(l));
}
