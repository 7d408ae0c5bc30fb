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
#include <optional>
#include <string>
#include <string_view>

#include "brainood/diffcore/adam.hpp"
#include "brainood/model/model.hpp"
#include "brainood/trainer/config.hpp"

namespace brainood {

/// Validation record of the epoch a checkpoint was selected at.
struct SelectionRecord {
  std::string selection;  // "id", "ood", "overall" or "final"
  std::size_t epoch = 0;
  std::size_t val_count = 0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

/// On disk: "BOOD", u32 format version, u64 metadata length, JSON metadata, then
/// every tensor as little-endian f64 in the order the metadata lists them.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  TrainConfig config;
  std::size_t n = 0;
  std::size_t classes = 0;
  std::string ood_site;
  std::size_t epoch = 0;
  model::TensorStore params;
  model::TensorStore buffers;
  AdamState adam;
  std::string shuffle_rng_state;
  std::string noise_rng_state;
  std::optional<SelectionRecord> selection;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with the checkpoint's configuration, parameters and running statistics.
model::BrainOODModel restore_model(const Checkpoint& ckpt);

}  // namespace brainood
