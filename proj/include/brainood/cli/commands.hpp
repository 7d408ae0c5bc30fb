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

#include <ostream>

#include "brainood/cli/run_config.hpp"

namespace brainood::cli {

// Each command reads only the config and the files it names, writes its outputs
// under cfg.paths.output_dir (every file via temp + rename) and prints a short
// summary to `out`. Failures raise brainood::Error.

/// manifest.json and matrices/<subject>.csv.
void cmd_generate(const RunConfig& cfg, std::ostream& out);

/// splits.json, after an exhaustive leakage audit of the plan.
void cmd_split(const RunConfig& cfg, std::ostream& out);

/// Trains fold cfg.fold: checkpoint_final.bood, checkpoint_best_{id,ood,overall}.bood,
/// history.json and a one-fold results.json.
void cmd_train(const RunConfig& cfg, std::ostream& out);

/// Evaluates paths.checkpoint on the validation and test subjects of fold cfg.fold: eval.json.
void cmd_eval(const RunConfig& cfg, std::ostream& out);

/// Every fold of the plan: fold<k>/ checkpoints and history, merged results.json.
void cmd_cv(const RunConfig& cfg, std::ostream& out);

/// score_map.csv and score_map.json for paths.checkpoint.
void cmd_interpret(const RunConfig& cfg, std::ostream& out);

}  // namespace brainood::cli
