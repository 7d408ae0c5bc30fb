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

#include "brainood/braindata/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "brainood/common/error.hpp"
#include "brainood/common/rng.hpp"
#include "json.hpp"

namespace brainood::data {

using nlohmann::json;

namespace {

std::size_t share(std::size_t total, std::size_t part, std::size_t whole) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(total) * static_cast<double>(part) /
                                               static_cast<double>(whole)));
}

std::string percent(std::size_t part, std::size_t total) {
  std::ostringstream out;
  out.precision(1);
  out << std::fixed << 100.0 * static_cast<double>(part) / static_cast<double>(total) << "%";
  return out.str();
}

}  // namespace

SplitPlan make_splits(std::span<const ManifestEntry> entries, const std::vector<std::string>& ood_sites,
                      SplitRatio ratio, std::uint64_t seed) {
  if (entries.empty()) throw Error(ErrorCode::kData, "make_splits: empty dataset");
  if (ood_sites.empty()) throw Error(ErrorCode::kInvalidArgument, "make_splits: no OOD sites given");
  const std::size_t whole = ratio.train + ratio.val + ratio.test;
  if (ratio.train == 0 || whole == 0) throw Error(ErrorCode::kInvalidArgument, "make_splits: invalid ratio");

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < entries.size(); ++i) position.emplace(entries[i].subject_id, i);
  const auto manifest_order = [&](std::vector<std::string>& ids) {
    std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) { return position[a] < position[b]; });
  };

  const std::size_t total = entries.size();
  const std::size_t val_target = share(total, ratio.val, whole);
  const std::size_t test_target = share(total, ratio.test, whole);

  SplitPlan plan;
  plan.seed = seed;
  plan.ratio = ratio;
  for (std::size_t k = 0; k < ood_sites.size(); ++k) {
    const std::string& site = ood_sites[k];
    std::vector<std::string> ood;
    std::vector<std::string> pool;
    for (const ManifestEntry& e : entries) (e.site == site ? ood : pool).push_back(e.subject_id);
    if (ood.empty()) throw Error(ErrorCode::kInvalidArgument, "make_splits: unknown site " + site);

    Rng rng(derive_seed(seed, k));
    std::shuffle(ood.begin(), ood.end(), rng);
    std::shuffle(pool.begin(), pool.end(), rng);

    const std::size_t ood_val = ood.size() / 2;
    const std::size_t ood_test = ood.size() - ood_val;
    if (ood_val > val_target || ood_test > test_target) {
      throw Error(ErrorCode::kInvalidArgument,
                  "make_splits: site " + site + " has " + std::to_string(ood.size()) + " subjects; the " +
                      std::to_string(ratio.train) + ":" + std::to_string(ratio.val) + ":" + std::to_string(ratio.test) +
                      " ratio is unattainable (achievable train:val:test = " + percent(pool.size(), total) + ":" +
                      percent(ood_val, total) + ":" + percent(ood_test, total) + ")");
    }
    std::size_t id_val = val_target - ood_val;
    std::size_t id_test = test_target - ood_test;
    // Keep at least one in-distribution subject in each held-out part when the pool allows it.
    if (id_val == 0 && pool.size() > id_test + 1) id_val = 1;
    if (id_test == 0 && pool.size() > id_val + 1) id_test = 1;
    if (id_val + id_test >= pool.size())
      throw Error(ErrorCode::kInvalidArgument, "make_splits: site " + site + " leaves no training subjects");

    Fold fold;
    fold.ood_site = site;
    fold.val_ids.assign(ood.begin(), ood.begin() + static_cast<std::ptrdiff_t>(ood_val));
    fold.test_ids.assign(ood.begin() + static_cast<std::ptrdiff_t>(ood_val), ood.end());
    auto it = pool.begin();
    fold.val_ids.insert(fold.val_ids.end(), it, it + static_cast<std::ptrdiff_t>(id_val));
    it += static_cast<std::ptrdiff_t>(id_val);
    fold.test_ids.insert(fold.test_ids.end(), it, it + static_cast<std::ptrdiff_t>(id_test));
    it += static_cast<std::ptrdiff_t>(id_test);
    fold.train_ids.assign(it, pool.end());
    manifest_order(fold.train_ids);
    manifest_order(fold.val_ids);
    manifest_order(fold.test_ids);
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitAudit audit_splits(const SplitPlan& plan, std::span<const ManifestEntry> entries) {
  std::unordered_map<std::string, const ManifestEntry*> by_id;
  for (const ManifestEntry& e : entries) by_id.emplace(e.subject_id, &e);
  SplitAudit audit;
  for (const Fold& fold : plan.folds) {
    ++audit.folds;
    std::set<std::string> seen;
    for (const auto* part : {&fold.train_ids, &fold.val_ids, &fold.test_ids}) {
      for (const std::string& id : *part) {
        if (!seen.insert(id).second) ++audit.overlaps;
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
          ++audit.unknown_ids;
          continue;
        }
        if (part == &fold.train_ids && it->second->site == fold.ood_site) ++audit.ood_in_train;
      }
    }
  }
  return audit;
}

std::string split_plan_to_json(const SplitPlan& plan) {
  json doc;
  doc["version"] = 1;
  doc["seed"] = plan.seed;
  doc["ratio"] = {plan.ratio.train, plan.ratio.val, plan.ratio.test};
  json folds = json::array();
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const Fold& f = plan.folds[k];
    folds.push_back({{"fold", k}, {"ood_site", f.ood_site}, {"train_ids", f.train_ids}, {"val_ids", f.val_ids},
                     {"test_ids", f.test_ids}});
  }
  doc["folds"] = std::move(folds);
  return doc.dump(2) + "\n";
}

SplitPlan split_plan_from_json(const std::string& text) {
  SplitPlan plan;
  try {
    const json doc = json::parse(text);
    plan.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("ratio")) {
      const auto r = doc["ratio"].get<std::vector<std::size_t>>();
      if (r.size() != 3) throw Error(ErrorCode::kFormat, "split plan: ratio must have three parts");
      plan.ratio = {r[0], r[1], r[2]};
    }
    for (const json& f : doc.at("folds")) {
      plan.folds.push_back({f.at("ood_site").get<std::string>(), f.at("train_ids").get<std::vector<std::string>>(),
                            f.at("val_ids").get<std::vector<std::string>>(),
                            f.at("test_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("split plan: ") + e.what());
  }
  return plan;
}

}  // namespace brainood::data
