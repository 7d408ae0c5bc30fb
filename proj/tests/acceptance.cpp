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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. `acceptance 3 6` runs only criteria 3 and 6.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "brainood/braindata/splits.hpp"
#include "brainood/braindata/synthetic.hpp"
#include "brainood/cli/commands.hpp"
#include "brainood/cli/selftest.hpp"
#include "brainood/common/fsio.hpp"
#include "brainood/common/log.hpp"
#include "brainood/diffcore/random.hpp"
#include "brainood/interpret/interpret.hpp"
#include "brainood/trainer/trainer.hpp"

using namespace brainood;
namespace fs = std::filesystem;

namespace {

// Observed by a one-time run of criteria 7 and 8 with the settings below; see README.
constexpr double kPinnedOodMargin = 0.0;
constexpr double kPinnedRecoveryAuc = 0.3892;

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

Outcome summarise(const std::vector<cli::CheckResult>& checks) {
  Outcome o{true, ""};
  for (const cli::CheckResult& c : checks) {
    o.passed = o.passed && c.passed;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += c.name + " " + fmt(c.max_error, 3) + (c.passed ? "" : " (FAILED)");
  }
  return o;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  const cli::CheckResult c = cli::check_full_gradient();
  const double secs = seconds_since(start);
  return {c.passed && secs < 10.0,
          "max relative error " + fmt(c.max_error, 3) + " over " + c.detail + ", " + fmt(secs, 3) + " s"};
}

Outcome loss_identities() { return summarise(cli::check_loss_identities(2024)); }

Outcome sampler() {
  const cli::CheckResult mean = cli::check_sampler_mean(1000000, 31);
  const cli::CheckResult support = cli::check_sampler_support(1000, 37);
  return {mean.passed && support.passed,
          "|mean - quadrature| = " + fmt(mean.max_error, 3) + " SE (" + mean.detail + "); " + support.detail};
}

Outcome structure() {
  return summarise({cli::check_symmetry(100, 41), cli::check_gin_equivariance(20, 43)});
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::map<std::string, std::uint64_t> hash_tree(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) out[fs::relative(entry.path(), root).string()] = fnv1a(read_text_file(entry.path()));
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("brainood-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::map<std::string, std::uint64_t>> runs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    cli::RunConfig cfg;
    cfg.seed = 12;
    cfg.synthetic.n = 16;
    cfg.synthetic.sites = 3;
    cfg.synthetic.subjects_per_site = 16;
    cfg.ratio = {2, 1, 1};
    cfg.train.hidden_dim = 8;
    cfg.train.epochs = 4;
    cfg.train.batch_size = 8;
    cfg.train.k = 3;
    cfg.jobs = run == 0 ? 1 : 3;
    cfg.propagate_seed();
    cfg.paths.manifest = (dir / "manifest.json").string();
    cfg.paths.splits = (dir / "splits.json").string();
    std::ostringstream sink;
    cfg.paths.output_dir = dir.string();
    cli::cmd_generate(cfg, sink);
    cli::cmd_split(cfg, sink);
    cfg.paths.output_dir = (dir / "cv").string();
    cli::cmd_cv(cfg, sink);
    runs.push_back(hash_tree(dir));
  }
  fs::remove_all(root);
  std::size_t checkpoints = 0, mismatches = 0;
  for (const auto& [name, hash] : runs[0]) {
    if (name.ends_with(".bood")) ++checkpoints;
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != hash) ++mismatches;
  }
  if (runs[0].size() != runs[1].size()) ++mismatches;
  return {mismatches == 0 && checkpoints > 0 && runs[0].count("cv/results.json") == 1,
          std::to_string(runs[0].size()) + " files hashed (" + std::to_string(checkpoints) +
              " checkpoints, results.json), " + std::to_string(mismatches) + " mismatches; second run used 3 jobs"};
}

// Plain GIN classifier written against the tape primitives: sum pooling, linear
// head, batch-statistics normalisation and inverted dropout, trained with Adam.
std::vector<double> gin_erm_losses(const data::Dataset& dataset, const data::Fold& fold, const TrainConfig& cfg,
                                   std::size_t steps) {
  const std::size_t n = dataset.node_count(), d = cfg.hidden_dim, classes = dataset.class_count();
  std::vector<Matrix> params;
  auto init = [&](const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    Rng rng = make_rng(cfg.seed, "init/" + name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (double& x : m.values()) x = dist(rng);
    params.push_back(std::move(m));
  };
  for (std::size_t l = 0; l < cfg.gin_layers; ++l) {
    const std::string p = "gin." + std::to_string(l) + ".";
    const std::size_t in = l == 0 ? n : d;
    init(p + "lin1.weight", in, d, in);
    init(p + "lin1.bias", 1, d, in);
    init(p + "lin2.weight", d, d, d);
    init(p + "lin2.bias", 1, d, d);
    params.emplace_back(1, 1);
    params.emplace_back(1, d, 1.0);
    params.emplace_back(1, d);
  }
  init("head.weight", d, classes, d);
  init("head.bias", 1, classes, d);

  std::vector<Matrix> m1, m2;
  for (const Matrix& p : params) {
    m1.emplace_back(p.rows(), p.cols());
    m2.emplace_back(p.rows(), p.cols());
  }
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  std::vector<std::size_t> train_idx;
  for (const std::string& id : fold.train_ids)
    train_idx.push_back(static_cast<std::size_t>(&dataset.at(id) - dataset.networks().data()));
  Rng shuffle = make_rng(cfg.seed, "train/shuffle");
  Rng noise = make_rng(cfg.seed, "train/noise");

  std::vector<double> losses;
  std::uint64_t t = 0;
  while (losses.size() < steps) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < order.size() && losses.size() < steps; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size), blocks = end - start;
      Matrix xs(blocks * n, n), as(blocks * n, n);
      auto labels = std::make_shared<std::vector<std::size_t>>();
      for (std::size_t b = 0; b < blocks; ++b) {
        const data::BrainNetwork& net = dataset.networks()[order[start + b]];
        std::copy(net.features.data(), net.features.data() + n * n, xs.data() + b * n * n);
        std::copy(net.adjacency.data(), net.adjacency.data() + n * n, as.data() + b * n * n);
        labels->push_back(net.label);
      }
      ad::Tape tape;
      std::vector<ad::Var> v;
      for (const Matrix& p : params) v.push_back(tape.variable(p));
      const ad::Var adj = tape.constant(as);
      ad::Var h = tape.constant(xs);
      for (std::size_t l = 0; l < cfg.gin_layers; ++l) {
        const ad::Var* p = v.data() + 7 * l;
        const ad::Var agg = ad::add(ad::mul(h, ad::add_scalar(p[4], 1.0)), ad::block_matmul(adj, h, blocks));
        const ad::Var hidden = ad::relu(ad::add(ad::matmul(agg, p[0]), p[1]));
        const ad::Var z = ad::add(ad::matmul(hidden, p[2]), p[3]);
        h = ad::relu(ad::add(ad::mul(ad::batch_norm(z, true, 1e-5), p[5]), p[6]));
        h = ad::dropout(h, std::make_shared<const Matrix>(dropout_mask(h.rows(), h.cols(), cfg.gin_dropout, noise)));
      }
      const std::size_t head = 7 * cfg.gin_layers;
      const ad::Var logits = ad::add(ad::matmul(ad::block_col_sum(h, blocks), v[head]), v[head + 1]);
      const ad::Var loss = ad::softmax_cross_entropy(logits, labels);
      losses.push_back(loss.item());

      const ad::Gradients grads = ad::backward(tape, loss);
      ++t;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix g = grads.of(v[i]);
        for (std::size_t j = 0; j < params[i].size(); ++j) {
          m1[i][j] = beta1 * m1[i][j] + (1.0 - beta1) * g[j];
          m2[i][j] = beta2 * m2[i][j] + (1.0 - beta2) * (g[j] * g[j]);
          params[i][j] -= cfg.lr * (m1[i][j] / c1) / (std::sqrt(m2[i][j] / c2) + adam_eps);
        }
      }
    }
  }
  return losses;
}

Outcome ablation_equivalence() {
  const data::SyntheticDataset syn = data::generate_synthetic({});
  const data::Dataset dataset = data::build_dataset(syn.manifest, syn.matrices);
  const data::SplitPlan plan = data::make_splits(dataset.manifest().entries, {"site0"}, {2, 1, 1}, 0);
  TrainConfig cfg;
  cfg.hidden_dim = 32;
  cfg.batch_size = 32;
  cfg.use_mask = false;
  cfg.use_sampler = false;
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = 0.0;
  cfg.seed = 77;
  const std::size_t steps = 20;
  TrainOptions options;
  options.max_steps = steps;
  const std::vector<double> ours = train(dataset, plan.folds[0], cfg, options).step_losses;
  const std::vector<double> reference = gin_erm_losses(dataset, plan.folds[0], cfg, steps);
  std::size_t equal = 0;
  for (std::size_t i = 0; i < std::min(ours.size(), reference.size()); ++i)
    equal += std::memcmp(&ours[i], &reference[i], sizeof(double)) == 0;
  return {ours.size() == steps && reference.size() == steps && equal == steps,
          std::to_string(equal) + "/" + std::to_string(steps) + " step losses bitwise equal (first " + fmt(ours[0], 17) +
              ", last " + fmt(ours.back(), 17) + ")"};
}

// Shared by criteria 7 and 8: the default generator, 3-fold site holdout.
struct OodRun {
  data::Dataset dataset;
  data::SplitPlan plan;
  TrainConfig cfg;
  CvResult full, erm;
  std::optional<Checkpoint> fold0_final;
  double seconds = 0.0;
};

TrainConfig ood_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 64;
  cfg.batch_size = 32;
  cfg.epochs = 100;
  return cfg;
}

OodRun& ood_run() {
  static std::optional<OodRun> run;
  if (run) return *run;
  run.emplace();
  const auto start = Clock::now();
  const data::SyntheticDataset syn = data::generate_synthetic({});
  run->dataset = data::build_dataset(syn.manifest, syn.matrices);
  run->plan = data::make_splits(run->dataset.manifest().entries, {"site0", "site1", "site2"}, {2, 1, 1}, 0);
  run->cfg = ood_config();
  CvOptions options;
  options.jobs = 3;
  options.on_fold = [&](std::size_t k, const TrainResult& tr) {
    if (k == 0) run->fold0_final = tr.final_checkpoint;
  };
  run->full = run_cv(run->dataset, run->plan, run->cfg, options);
  run->erm = run_cv(run->dataset, run->plan, erm_baseline(run->cfg), {3, nullptr});
  run->seconds = seconds_since(start);
  return *run;
}

double mean_ood(const CvResult& r) {
  double s = 0.0;
  for (const FoldResult& f : r.folds) s += f.ood_acc;
  return s / static_cast<double>(r.folds.size());
}

Outcome synthetic_ood() {
  const OodRun& run = ood_run();
  const double full = mean_ood(run.full), erm = mean_ood(run.erm), margin = full - erm;
  std::string folds;
  for (std::size_t k = 0; k < run.full.folds.size(); ++k)
    folds += " " + run.full.folds[k].ood_site + " " + fmt(run.full.folds[k].ood_acc, 3) + "/" +
             fmt(run.erm.folds[k].ood_acc, 3);
  return {margin > 0.0 && std::fabs(margin - kPinnedOodMargin) <= 0.05 && run.seconds < 900.0,
          "mean OOD accuracy " + fmt(full) + " vs ERM " + fmt(erm) + ", margin " + fmt(margin) + " (pinned " +
              fmt(kPinnedOodMargin) + "), per fold" + folds + ", " + fmt(run.seconds, 4) + " s"};
}

Outcome recovery() {
  const OodRun& run = ood_run();
  const auto& entries = run.dataset.manifest().entries;
  std::vector<std::string> ids;
  for (const auto& e : entries) ids.push_back(e.subject_id);
  const auto& truth = *run.dataset.manifest().ground_truth_edges;
  const Checkpoint untrained =
      initial_checkpoint(run.dataset, fold_config(run.cfg, 0), run.plan.folds[0].ood_site);
  const double base = interpret::recovery_auc(interpret::score_map(untrained, run.dataset, ids), truth);
  const double trained = interpret::recovery_auc(interpret::score_map(*run.fold0_final, run.dataset, ids), truth);
  return {trained > 0.8 && trained - base >= 0.2,
          "trained AUC " + fmt(trained) + " (pinned " + fmt(kPinnedRecoveryAuc) + "), untrained " + fmt(base) +
              ", gain " + fmt(trained - base) + " (needs >= 0.2)"};
}

Outcome protocol() {
  data::SyntheticConfig sc;
  sc.n = 6;
  sc.sites = 10;
  sc.subjects_per_site = 100;
  const data::SyntheticDataset syn = data::generate_synthetic(sc);
  const auto& entries = syn.manifest.entries;
  std::map<std::string, std::string> site_of;
  for (const auto& e : entries) site_of[e.subject_id] = e.site;
  const std::vector<std::string> sites = syn.manifest.sites();

  std::size_t plans = 0, folds = 0, leaks = 0, overlaps = 0, unknown = 0, audit_failures = 0, ood_missing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const data::SplitPlan plan = data::make_splits(entries, sites, {8, 1, 1}, seed);
    ++plans;
    if (!data::audit_splits(plan, entries).ok()) ++audit_failures;
    for (const data::Fold& f : plan.folds) {
      ++folds;
      std::set<std::string> seen;
      for (const auto* part : {&f.train_ids, &f.val_ids, &f.test_ids})
        for (const std::string& id : *part) {
          if (!site_of.count(id)) ++unknown;
          if (!seen.insert(id).second) ++overlaps;
        }
      for (const std::string& id : f.train_ids)
        if (site_of[id] == f.ood_site) ++leaks;
      std::size_t ood_held = 0;
      for (const auto* part : {&f.val_ids, &f.test_ids})
        for (const std::string& id : *part) ood_held += site_of[id] == f.ood_site;
      if (ood_held != sc.subjects_per_site) ++ood_missing;
    }
  }
  return {leaks == 0 && overlaps == 0 && unknown == 0 && audit_failures == 0 && ood_missing == 0 && folds == 50,
          std::to_string(plans) + " plans x 10 folds over " + std::to_string(entries.size()) + " subjects: " +
              std::to_string(leaks) + " OOD subjects in train, " + std::to_string(overlaps) + " overlaps, " +
              std::to_string(unknown) + " unknown ids, " + std::to_string(ood_missing) +
              " folds missing held-out subjects, " + std::to_string(audit_failures) + " audit failures"};
}

}  // namespace

int main(int argc, char** argv) {
  if (!std::getenv("BRAINOOD_LOG")) log::set_threshold(log::Level::kError);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"loss identities", loss_identities},
      {"sampler correctness", sampler},
      {"structural invariants", structure},
      {"determinism", determinism},
      {"ablation equivalence", ablation_equivalence},
      {"synthetic OOD improvement", synthetic_ood},
      {"interpretation recovery", recovery},
      {"protocol fidelity", protocol},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion(s) failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
