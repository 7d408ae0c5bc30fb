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

#include "brainood/trainer/config.hpp"

#include <cmath>
#include <string>

#include "brainood/common/error.hpp"

namespace brainood {

namespace {

void check(bool ok, const char* field, const std::string& why) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, std::string("train config: ") + field + " " + why);
}

}  // namespace

void TrainConfig::validate() const {
  check(std::isfinite(lambda1) && lambda1 >= 0.0, "lambda1", "must be >= 0");
  check(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2", "must be >= 0");
  check(std::isfinite(lambda3) && lambda3 >= 0.0, "lambda3", "must be >= 0");
  check(std::isfinite(tau) && tau > 0.0, "tau", "must be > 0");
  check(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  check(k >= 1, "k", "must be >= 1");
  check(batch_size >= 1, "batch_size", "must be >= 1");
  check(epochs >= 1, "epochs", "must be >= 1");
  check(hidden_dim >= 1, "hidden_dim", "must be >= 1");
  check(gin_layers >= 1, "gin_layers", "must be >= 1");
  check(feature_dropout >= 0.0 && feature_dropout < 1.0, "feature_dropout", "must lie in [0, 1)");
  check(gin_dropout >= 0.0 && gin_dropout < 1.0, "gin_dropout", "must lie in [0, 1)");
}

TrainConfig erm_baseline(TrainConfig cfg) {
  cfg.use_mask = false;
  cfg.use_sampler = false;
  cfg.use_entropy = false;
  cfg.use_recon = false;
  cfg.use_align = false;
  cfg.lambda1 = cfg.lambda2 = cfg.lambda3 = 0.0;
  return cfg;
}

}  // namespace brainood
