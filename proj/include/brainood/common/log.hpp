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

#include <iostream>
#include <sstream>
#include <string>

namespace brainood::log {

enum class Level { kError = 0, kInfo = 1, kDebug = 2 };

/// Reads BRAINOOD_LOG once; defaults to info.
Level threshold();
void set_threshold(Level level);

void write(Level level, const std::string& message);

template <typename... Args>
void info(const Args&... args) {
  if (threshold() < Level::kInfo) return;
  std::ostringstream out;
  (out << ... << args);
  write(Level::kInfo, out.str());
}

template <typename... Args>
void debug(const Args&... args) {
  if (threshold() < Level::kDebug) return;
  std::ostringstream out;
  (out << ... << args);
  write(Level::kDebug, out.str());
}

}  // namespace brainood::log
