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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "brainood/braindata/splits.hpp"
#include "brainood/braindata/synthetic.hpp"
#include "brainood/model/extractor.hpp"
#include "brainood/trainer/config.hpp"

namespace brainood::cli {

struct PathsConfig {
  std::string manifest;
  std::string splits;
  std::string output_dir = "out";
  std::string checkpoint;
};

/// Everything a command reads. One root seed feeds the generator, the split
/// shuffle and training; each of those derives its own tagged streams from it.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  /// Sampling used by `eval`: kNoiseFree for "soft", kHard for "hard".
  model::SampleMode eval_mode = model::SampleMode::kNoiseFree;
  PathsConfig paths;
  data::SyntheticConfig synthetic;
  TrainConfig train;
  /// Empty: one fold per site of the manifest, in sorted order.
  std::vector<std::string> ood_sites;
  data::SplitRatio ratio;
  /// Requested fold count; 0 follows the number of OOD sites.
  std::size_t folds = 0;
  /// Fold used by `train`, `eval` and `interpret`.
  std::size_t fold = 0;
  std::size_t top_k = 10;
  /// "all" or "test": the subjects `interpret` averages over.
  std::string interpret_subjects = "all";

  /// Copies the root seed into the component configs.
  void propagate_seed();
};

/// Sets one dotted key ("train.lr", "paths.manifest", "seed"). Unknown keys and
/// malformed values raise Error(kInvalidArgument) naming the key.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses a TOML-style file: `[section]` headers, `key = value` lines, `#` comments,
/// quoted or bare strings, and `[a, b]` lists.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<std::string> config_keys();

/// Maps an --ablate name (no-mask, no-sampler, no-entropy, no-recon, no-align,
/// use-raw-X, use-raw-A) onto the training flags.
void apply_ablation(TrainConfig& cfg, std::string_view name);
std::vector<std::string> ablation_names();

model::SampleMode parse_eval_mode(std::string_view name);

}  // namespace brainood::cli
