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

#include "brainood/trainer/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "brainood/common/error.hpp"
#include "brainood/common/log.hpp"
#include "json.hpp"

namespace brainood {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalBatch = 64;

std::vector<std::size_t> resolve(const data::Dataset& dataset, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const std::string& id : ids)
    out.push_back(static_cast<std::size_t>(&dataset.at(id) - dataset.networks().data()));
  return out;
}

Checkpoint snapshot(const model::BrainOODModel& model, const AdamState& adam, std::size_t epoch, const Rng& shuffle,
                    const Rng& noise, const std::string& ood_site) {
  Checkpoint c;
  c.config = model.config();
  c.n = model.node_count();
  c.classes = model.class_count();
  c.ood_site = ood_site;
  c.epoch = epoch;
  c.params = model.params();
  c.buffers = model.buffers();
  c.adam = adam;
  c.shuffle_rng_state = rng_state(shuffle);
  c.noise_rng_state = rng_state(noise);
  return c;
}

struct Best {
  std::optional<Checkpoint> ckpt;
  double accuracy = -1.0;
  double loss = std::numeric_limits<double>::infinity();

  void offer(const std::optional<Metrics>& m, const std::string& name, std::size_t epoch,
             const std::function<Checkpoint()>& make) {
    if (!m || m->count == 0) return;
    if (!(m->accuracy > accuracy || (m->accuracy == accuracy && m->mean_loss < loss))) return;
    accuracy = m->accuracy;
    loss = m->mean_loss;
    ckpt = make();
    ckpt->selection = SelectionRecord{name, epoch, m->count, m->accuracy, m->mean_loss};
  }
};

}  // namespace

TrainResult train(const data::Dataset& dataset, const data::Fold& fold, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (fold.train_ids.empty()) throw Error(ErrorCode::kInvalidArgument, "train: empty split part (train)");
  if (fold.val_ids.empty()) throw Error(ErrorCode::kInvalidArgument, "train: empty split part (val)");
  const std::vector<std::size_t> train_idx = resolve(dataset, fold.train_ids);
  resolve(dataset, fold.val_ids);

  model::BrainOODModel model(dataset.node_count(), dataset.class_count(), cfg);
  AdamState adam = AdamState::for_params(model.params().values(), cfg.lr);
  Rng shuffle = make_rng(cfg.seed, "train/shuffle");
  Rng noise = make_rng(cfg.seed, "train/noise");

  TrainResult result;
  Best best_id, best_ood, best_overall;
  std::size_t steps = 0;
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0, cls_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const model::Batch batch =
          model::make_batch(dataset, std::span<const std::size_t>(order.data() + start, end - start));
      ad::Tape tape;
      const std::vector<ad::Var> vars = model.bind(tape);
      const model::ForwardResult fwd = model.forward(tape, vars, batch, {model::Mode::kTrain}, noise);
      const double loss = fwd.total.item();
      if (!std::isfinite(loss))
        throw Error(ErrorCode::kDomain, "train: non-finite loss at epoch " + std::to_string(epoch));
      const ad::Gradients grads = ad::backward(tape, fwd.total);
      std::vector<Matrix> g;
      g.reserve(vars.size());
      for (const ad::Var& v : vars) g.push_back(grads.of(v));
      adam_step(model.params().values(), g, adam);
      model.update_running_stats(fwd);
      result.step_losses.push_back(loss);
      loss_sum += loss;
      cls_sum += fwd.cls.item();
      ++batches;
      if (options.max_steps != 0 && ++steps >= options.max_steps) {
        stop = true;
        break;
      }
    }
    if (stop && batches == 0) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_cls = cls_sum / static_cast<double>(batches);
    const MetricsReport val = report_for(predict(model, dataset, fold.val_ids), fold.ood_site, model.class_count());
    rec.val_id = val.id;
    rec.val_ood = val.ood;
    rec.val_overall = val.overall;
    const auto make = [&] { return snapshot(model, adam, epoch, shuffle, noise, fold.ood_site); };
    best_id.offer(val.id, "id", epoch, make);
    best_ood.offer(val.ood, "ood", epoch, make);
    best_overall.offer(val.overall, "overall", epoch, make);
    log::debug("epoch ", epoch, " loss ", rec.train_loss, " val acc ", val.overall.accuracy);
    if (options.on_epoch) options.on_epoch(rec);
    result.history.push_back(std::move(rec));
  }

  result.final_checkpoint = snapshot(model, adam, result.history.empty() ? 0 : result.history.back().epoch, shuffle,
                                     noise, fold.ood_site);
  result.best_id = std::move(best_id.ckpt);
  result.best_ood = std::move(best_ood.ckpt);
  result.best_overall = std::move(best_overall.ckpt);
  return result;
}

Checkpoint initial_checkpoint(const data::Dataset& dataset, const TrainConfig& cfg, const std::string& ood_site) {
  const model::BrainOODModel model(dataset.node_count(), dataset.class_count(), cfg);
  const AdamState adam = AdamState::for_params(model.params().values(), cfg.lr);
  return snapshot(model, adam, 0, make_rng(cfg.seed, "train/shuffle"), make_rng(cfg.seed, "train/noise"), ood_site);
}

Predictions predict(const model::BrainOODModel& model, const data::Dataset& dataset,
                    const std::vector<std::string>& subject_ids, model::SampleMode sampling,
                    std::uint64_t sampling_seed) {
  const std::vector<std::size_t> idx = resolve(dataset, subject_ids);
  const std::size_t classes = model.class_count();
  Predictions out;
  Rng rng(sampling_seed);
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const std::size_t end = std::min(idx.size(), start + kEvalBatch);
    const model::Batch batch = model::make_batch(dataset, std::span<const std::size_t>(idx.data() + start, end - start));
    ad::Tape tape;
    const std::vector<ad::Var> vars = model.bind(tape);
    const model::ForwardResult fwd = model.forward(tape, vars, batch, {model::Mode::kEval, sampling}, rng);
    const Matrix& logits = fwd.logits.value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const data::BrainNetwork& net = dataset.networks()[idx[start + r]];
      double mx = logits(r, 0);
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits(r, c));
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits(r, c) - mx);
      for (std::size_t c = 0; c < classes; ++c) out.probabilities.push_back(std::exp(logits(r, c) - mx) / z);
      out.losses.push_back(std::log(z) + mx - logits(r, net.label));
      out.subject_ids.push_back(net.subject_id);
      out.labels.push_back(net.label);
      out.sites.push_back(net.site);
    }
  }
  return out;
}

MetricsReport report_for(const Predictions& p, const std::string& ood_site, std::size_t classes) {
  MetricsReport report;
  report.overall = compute_metrics(p.labels, p.probabilities, p.losses, classes);
  for (bool ood : {false, true}) {
    std::vector<std::size_t> labels;
    std::vector<double> probs, losses;
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      if ((p.sites[i] == ood_site) != ood) continue;
      labels.push_back(p.labels[i]);
      probs.insert(probs.end(), p.probabilities.begin() + static_cast<std::ptrdiff_t>(i * classes),
                   p.probabilities.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
      losses.push_back(p.losses[i]);
    }
    if (labels.empty()) continue;
    (ood ? report.ood : report.id) = compute_metrics(labels, probs, losses, classes);
  }
  return report;
}

MetricsReport evaluate(const Checkpoint& ckpt, const data::Dataset& dataset, const std::vector<std::string>& subject_ids,
                       model::SampleMode sampling) {
  if (dataset.node_count() != ckpt.n || dataset.class_count() != ckpt.classes)
    throw Error(ErrorCode::kData, "evaluate: dataset shape does not match the checkpoint");
  const model::BrainOODModel model = restore_model(ckpt);
  return report_for(predict(model, dataset, subject_ids, sampling, derive_seed(ckpt.config.seed, "eval/sampling")),
                    ckpt.ood_site, ckpt.classes);
}

TrainConfig fold_config(const TrainConfig& cfg, std::size_t k) {
  TrainConfig fold_cfg = cfg;
  fold_cfg.seed = derive_seed(cfg.seed, k);
  return fold_cfg;
}

FoldResult fold_result(const data::Dataset& dataset, const data::Fold& fold, std::size_t k, const TrainResult& tr) {
  const Checkpoint& overall = tr.best_overall ? *tr.best_overall : tr.final_checkpoint;
  const Checkpoint& id = tr.best_id ? *tr.best_id : overall;
  const Checkpoint& ood = tr.best_ood ? *tr.best_ood : overall;

  FoldResult r;
  r.fold = k;
  r.ood_site = fold.ood_site;
  r.id_selection = evaluate(id, dataset, fold.test_ids);
  r.ood_selection = evaluate(ood, dataset, fold.test_ids);
  r.overall_selection = evaluate(overall, dataset, fold.test_ids);
  r.id_acc = r.id_selection.id ? r.id_selection.id->accuracy : 0.0;
  r.ood_acc = r.ood_selection.ood ? r.ood_selection.ood->accuracy : 0.0;
  r.overall_acc = r.overall_selection.overall.accuracy;
  r.id_epoch = id.epoch;
  r.ood_epoch = ood.epoch;
  r.overall_epoch = overall.epoch;
  log::info("fold ", k, ": id ", r.id_acc, " ood ", r.ood_acc, " overall ", r.overall_acc);
  return r;
}

namespace {

FoldResult run_fold(const data::Dataset& dataset, const data::Fold& fold, std::size_t k, const TrainConfig& cfg,
                    const CvOptions& options) {
  log::info("fold ", k, ": holding out site ", fold.ood_site, " (", fold.train_ids.size(), " train, ",
            fold.val_ids.size(), " val, ", fold.test_ids.size(), " test)");
  const TrainResult tr = train(dataset, fold, fold_config(cfg, k));
  if (options.on_fold) options.on_fold(k, tr);
  return fold_result(dataset, fold, k, tr);
}

}  // namespace

CvResult run_cv(const data::Dataset& dataset, const data::SplitPlan& plan, const TrainConfig& cfg,
                const CvOptions& options) {
  cfg.validate();
  if (plan.folds.empty()) throw Error(ErrorCode::kInvalidArgument, "run_cv: split plan has no folds");
  const data::SplitAudit audit = data::audit_splits(plan, dataset.manifest().entries);
  if (!audit.ok()) throw Error(ErrorCode::kData, "run_cv: split plan fails its audit");

  CvResult result;
  result.folds.resize(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < plan.folds.size(); k = next++) {
      try {
        result.folds[k] = run_fold(dataset, plan.folds[k], k, cfg, options);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, plan.folds.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

std::vector<std::string> cv_columns() {
  return {"id_acc", "ood_acc", "overall_acc", "precision", "recall", "f1_positive", "micro_f1", "roc_auc"};
}

double cv_column(const FoldResult& f, const std::string& column) {
  const Metrics& m = f.overall_selection.overall;
  if (column == "id_acc") return f.id_acc;
  if (column == "ood_acc") return f.ood_acc;
  if (column == "overall_acc") return f.overall_acc;
  if (column == "precision") return m.precision;
  if (column == "recall") return m.recall;
  if (column == "f1_positive") return m.f1_positive;
  if (column == "micro_f1") return m.micro_f1;
  if (column == "roc_auc") return m.roc_auc ? *m.roc_auc : std::numeric_limits<double>::quiet_NaN();
  throw Error(ErrorCode::kInvalidArgument, "unknown results column " + column);
}

namespace {

json metrics_json(const Metrics& m) {
  json j = {{"count", m.count},       {"accuracy", m.accuracy}, {"precision", m.precision},
            {"recall", m.recall},     {"f1_positive", m.f1_positive}, {"micro_f1", m.micro_f1},
            {"mean_loss", m.mean_loss}, {"confusion", m.confusion}};
  j["roc_auc"] = m.roc_auc ? json(*m.roc_auc) : json(nullptr);
  return j;
}

json report_json(const MetricsReport& r) {
  json j = {{"overall", metrics_json(r.overall)}};
  j["id"] = r.id ? metrics_json(*r.id) : json(nullptr);
  j["ood"] = r.ood ? metrics_json(*r.ood) : json(nullptr);
  return j;
}

}  // namespace

std::string metrics_report_to_json(const MetricsReport& report) { return report_json(report).dump(2) + "\n"; }

std::string cv_result_to_json(const CvResult& result) {
  json folds = json::array();
  for (const FoldResult& f : result.folds) {
    folds.push_back({{"fold", f.fold},
                     {"ood_site", f.ood_site},
                     {"id_acc", f.id_acc},
                     {"ood_acc", f.ood_acc},
                     {"overall_acc", f.overall_acc},
                     {"selected_epoch", {{"id", f.id_epoch}, {"ood", f.ood_epoch}, {"overall", f.overall_epoch}}},
                     {"metrics",
                      {{"id_selection", report_json(f.id_selection)},
                       {"ood_selection", report_json(f.ood_selection)},
                       {"overall_selection", report_json(f.overall_selection)}}}});
  }
  json mean = json::object(), std = json::object();
  for (const std::string& col : cv_columns()) {
    std::vector<double> values;
    for (const FoldResult& f : result.folds) {
      const double v = cv_column(f, col);
      if (std::isfinite(v)) values.push_back(v);
    }
    const MeanStd ms = mean_std(values);
    mean[col] = values.empty() ? json(nullptr) : json(ms.mean);
    std[col] = ms.std ? json(*ms.std) : json(nullptr);
  }
  return json({{"folds", folds}, {"aggregate", {{"mean", mean}, {"std", std}}}}).dump(2) + "\n";
}

CvResult cv_result_from_json(const std::string& text) {
  CvResult r;
  try {
    const json j = json::parse(text);
    for (const json& f : j.at("folds")) {
      FoldResult fr;
      fr.fold = f.at("fold").get<std::size_t>();
      fr.ood_site = f.at("ood_site").get<std::string>();
      fr.id_acc = f.at("id_acc").get<double>();
      fr.ood_acc = f.at("ood_acc").get<double>();
      fr.overall_acc = f.at("overall_acc").get<double>();
      fr.id_epoch = f.at("selected_epoch").at("id").get<std::size_t>();
      fr.ood_epoch = f.at("selected_epoch").at("ood").get<std::size_t>();
      fr.overall_epoch = f.at("selected_epoch").at("overall").get<std::size_t>();
      r.folds.push_back(std::move(fr));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("results file: ") + e.what());
  }
  return r;
}

}  // namespace brainood
