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

#include "brainood/cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>

#include "brainood/braindata/network.hpp"
#include "brainood/braindata/splits.hpp"
#include "brainood/common/error.hpp"
#include "brainood/common/fsio.hpp"
#include "brainood/common/log.hpp"
#include "brainood/interpret/interpret.hpp"
#include "brainood/trainer/checkpoint.hpp"
#include "brainood/trainer/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace brainood::cli {
namespace {

fs::path existing(const std::string& path, const char* key) {
  if (path.empty()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " is not set");
  if (!fs::exists(path)) throw Error(ErrorCode::kNotFound, std::string(key) + ": no such file '" + path + "'");
  return path;
}

fs::path output_dir(const RunConfig& cfg) {
  if (cfg.paths.output_dir.empty()) throw Error(ErrorCode::kInvalidArgument, "paths.output_dir is not set");
  fs::path dir = cfg.paths.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

data::SplitPlan load_plan(const RunConfig& cfg) {
  return data::split_plan_from_json(read_text_file(existing(cfg.paths.splits, "paths.splits")));
}

const data::Fold& pick_fold(const data::SplitPlan& plan, std::size_t k) {
  if (k >= plan.folds.size())
    throw Error(ErrorCode::kInvalidArgument, "split.fold: fold " + std::to_string(k) + " does not exist (plan has " +
                                                 std::to_string(plan.folds.size()) + ")");
  return plan.folds[k];
}

json history_json(const std::vector<EpochRecord>& history) {
  auto acc = [](const std::optional<Metrics>& m) { return m ? json(m->accuracy) : json(nullptr); };
  json out = json::array();
  for (const EpochRecord& e : history)
    out.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"train_cls", e.train_cls},
                   {"val_accuracy", e.val_overall.accuracy},
                   {"val_loss", e.val_overall.mean_loss},
                   {"val_id_accuracy", acc(e.val_id)},
                   {"val_ood_accuracy", acc(e.val_ood)}});
  return out;
}

void write_training_outputs(const fs::path& dir, const TrainResult& tr) {
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint_final.bood", tr.final_checkpoint);
  if (tr.best_id) save_checkpoint(dir / "checkpoint_best_id.bood", *tr.best_id);
  if (tr.best_ood) save_checkpoint(dir / "checkpoint_best_ood.bood", *tr.best_ood);
  if (tr.best_overall) save_checkpoint(dir / "checkpoint_best_overall.bood", *tr.best_overall);
  write_file_atomic(dir / "history.json", history_json(tr.history).dump(2) + "\n");
}

void print_aggregate(const std::string& results_text, std::ostream& out) {
  const json doc = json::parse(results_text);
  out << std::fixed << std::setprecision(4);
  for (const std::string& col : cv_columns()) {
    const json& m = doc["aggregate"]["mean"][col];
    const json& s = doc["aggregate"]["std"][col];
    out << col << ": ";
    if (m.is_null()) out << "n/a";
    else out << m.get<double>();
    if (!s.is_null()) out << " +- " << s.get<double>();
    out << '\n';
  }
}

}  // namespace

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
  data::SyntheticConfig syn = cfg.synthetic;
  syn.seed = cfg.seed;
  const data::SyntheticDataset ds = data::generate_synthetic(syn);
  const fs::path dir = output_dir(cfg);
  data::write_synthetic(ds, dir);
  out << "wrote " << (dir / "manifest.json").string() << ": " << ds.manifest.entries.size() << " subjects, "
      << syn.sites << " sites, n=" << ds.manifest.n << '\n';
}

void cmd_split(const RunConfig& cfg, std::ostream& out) {
  const data::DatasetManifest manifest = data::read_manifest(existing(cfg.paths.manifest, "paths.manifest"));
  std::vector<std::string> sites = manifest.sites();
  std::sort(sites.begin(), sites.end());

  std::vector<std::string> ood = cfg.ood_sites;
  if (ood.empty()) {
    const std::size_t folds = cfg.folds == 0 ? sites.size() : cfg.folds;
    if (folds > sites.size())
      throw Error(ErrorCode::kInvalidArgument, "split.folds: fewer sites than folds (" + std::to_string(sites.size()) +
                                                   " sites, " + std::to_string(folds) + " folds)");
    ood.assign(sites.begin(), sites.begin() + static_cast<std::ptrdiff_t>(folds));
  } else if (cfg.folds != 0 && cfg.folds != ood.size()) {
    throw Error(ErrorCode::kInvalidArgument, "split.folds: " + std::to_string(cfg.folds) + " folds requested but " +
                                                 std::to_string(ood.size()) + " ood sites listed");
  }

  const data::SplitPlan plan = data::make_splits(manifest.entries, ood, cfg.ratio, cfg.seed);
  const data::SplitAudit audit = data::audit_splits(plan, manifest.entries);
  out << "audit: folds=" << audit.folds << " ood_in_train=" << audit.ood_in_train << " overlaps=" << audit.overlaps
      << " unknown_ids=" << audit.unknown_ids << (audit.ok() ? " ok" : " FAILED") << '\n';
  if (!audit.ok()) throw Error(ErrorCode::kData, "split plan failed its leakage audit");
  const fs::path dir = output_dir(cfg);
  write_file_atomic(dir / "splits.json", data::split_plan_to_json(plan));
  out << "wrote " << (dir / "splits.json").string() << '\n';
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const fs::path manifest = existing(cfg.paths.manifest, "paths.manifest");
  const data::SplitPlan plan = load_plan(cfg);
  const data::Fold& fold = pick_fold(plan, cfg.fold);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  train_cfg.validate();
  const fs::path dir = output_dir(cfg);
  const data::Dataset dataset = data::load_dataset(manifest);

  const TrainResult tr = train(dataset, fold, fold_config(train_cfg, cfg.fold));
  write_training_outputs(dir, tr);
  CvResult result;
  result.folds.push_back(fold_result(dataset, fold, cfg.fold, tr));
  const std::string text = cv_result_to_json(result);
  write_file_atomic(dir / "results.json", text);
  out << "fold " << cfg.fold << " (ood site " << fold.ood_site << "), " << tr.history.size() << " epochs\n";
  print_aggregate(text, out);
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(existing(cfg.paths.checkpoint, "paths.checkpoint"));
  const fs::path manifest = existing(cfg.paths.manifest, "paths.manifest");
  const data::SplitPlan plan = load_plan(cfg);
  const data::Fold& fold = pick_fold(plan, cfg.fold);
  const fs::path dir = output_dir(cfg);
  const data::Dataset dataset = data::load_dataset(manifest);

  const MetricsReport val = evaluate(ckpt, dataset, fold.val_ids, cfg.eval_mode);
  const MetricsReport test = evaluate(ckpt, dataset, fold.test_ids, cfg.eval_mode);
  json doc = {{"checkpoint_epoch", ckpt.epoch},
              {"ood_site", ckpt.ood_site},
              {"mode", cfg.eval_mode == model::SampleMode::kHard ? "hard" : "soft"},
              {"val", json::parse(metrics_report_to_json(val))},
              {"test", json::parse(metrics_report_to_json(test))}};
  if (ckpt.selection)
    doc["selection"] = {{"selection", ckpt.selection->selection},
                        {"epoch", ckpt.selection->epoch},
                        {"val_count", ckpt.selection->val_count},
                        {"val_accuracy", ckpt.selection->val_accuracy},
                        {"val_loss", ckpt.selection->val_loss}};
  write_file_atomic(dir / "eval.json", doc.dump(2) + "\n");
  out << std::fixed << std::setprecision(4) << "val accuracy " << val.overall.accuracy << ", test accuracy "
      << test.overall.accuracy;
  if (test.id) out << " (id " << test.id->accuracy << ")";
  if (test.ood) out << " (ood " << test.ood->accuracy << ")";
  out << '\n';
}

void cmd_cv(const RunConfig& cfg, std::ostream& out) {
  const fs::path manifest = existing(cfg.paths.manifest, "paths.manifest");
  const data::SplitPlan plan = load_plan(cfg);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  train_cfg.validate();
  const fs::path dir = output_dir(cfg);
  const data::Dataset dataset = data::load_dataset(manifest);

  CvOptions options;
  options.jobs = cfg.jobs;
  options.on_fold = [&dir](std::size_t k, const TrainResult& tr) {
    write_training_outputs(dir / ("fold" + std::to_string(k)), tr);
  };
  const CvResult result = run_cv(dataset, plan, train_cfg, options);
  const std::string text = cv_result_to_json(result);
  write_file_atomic(dir / "results.json", text);
  out << plan.folds.size() << " folds\n";
  print_aggregate(text, out);
}

void cmd_interpret(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(existing(cfg.paths.checkpoint, "paths.checkpoint"));
  const data::Dataset dataset = data::load_dataset(existing(cfg.paths.manifest, "paths.manifest"));
  std::vector<std::string> ids;
  if (cfg.interpret_subjects == "test") {
    ids = pick_fold(load_plan(cfg), cfg.fold).test_ids;
  } else {
    for (const data::ManifestEntry& e : dataset.manifest().entries) ids.push_back(e.subject_id);
  }
  const fs::path dir = output_dir(cfg);

  const interpret::EdgeScoreMap map = interpret::score_map(ckpt, dataset, ids);
  const interpret::TopEdges top = interpret::top_k_edges(map, cfg.top_k);
  write_file_atomic(dir / "score_map.csv", interpret::score_map_csv(map));
  write_file_atomic(dir / "score_map.json", interpret::score_map_summary_json(map, top));
  out << "score map over " << map.subject_count << " subjects\n";
  for (const interpret::RankedEdge& e : top.edges) out << "  " << e.i << " - " << e.j << "  " << e.score << '\n';
  if (top.short_list) out << "  (fewer than " << cfg.top_k << " nonzero edges)\n";
  if (const auto& truth = dataset.manifest().ground_truth_edges; truth && !truth->empty())
    out << "recovery auc " << interpret::recovery_auc(map, *truth) << '\n';
}

}  // namespace brainood::cli
