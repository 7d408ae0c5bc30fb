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

#include "brainood/common/log.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string_view>

namespace brainood::log {
namespace {

Level parse_env() {
  const char* raw = std::getenv("BRAINOOD_LOG");
  if (raw == nullptr) return Level::kInfo;
  const std::string_view value(raw);
  if (value == "error") return Level::kError;
  if (value == "debug") return Level::kDebug;
  return Level::kInfo;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> slot{static_cast<int>(parse_env())};
  return slot;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level threshold() { return static_cast<Level>(level_slot().load()); }

void set_threshold(Level level) { level_slot().store(static_cast<int>(level)); }

void write(Level level, const std::string& message) {
  const char* tag = level == Level::kDebug ? "debug" : level == Level::kInfo ? "info" : "error";
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "brainood: " << tag << ": " << message << '\n';
}

}  // namespace brainood::log
