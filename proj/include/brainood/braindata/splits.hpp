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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brainood/braindata/network.hpp"

namespace brainood::data {

struct SplitRatio {
  std::size_t train = 8;
  std::size_t val = 1;
  std::size_t test = 1;
};

struct Fold {
  std::string ood_site;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  SplitRatio ratio;
  std::vector<Fold> folds;
};

/// Site-holdout folds. For fold k every subject of ood_sites[k] leaves the training
/// pool and is dealt half to validation, half to test (odd one to test); the other
/// subjects are shuffled and topped up so val and test reach their ratio share.
SplitPlan make_splits(std::span<const ManifestEntry> entries, const std::vector<std::string>& ood_sites,
                      SplitRatio ratio, std::uint64_t seed);

struct SplitAudit {
  std::size_t folds = 0;
  std::size_t ood_in_train = 0;
  std::size_t overlaps = 0;
  std::size_t unknown_ids = 0;
  bool ok() const { return ood_in_train == 0 && overlaps == 0 && unknown_ids == 0; }
};

/// Exhaustive leakage/disjointness check of a plan against the manifest.
SplitAudit audit_splits(const SplitPlan& plan, std::span<const ManifestEntry> entries);

std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);

}  // namespace brainood::data
