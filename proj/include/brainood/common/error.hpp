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

#include <stdexcept>
#include <string>
#include <vector>

namespace brainood {

/// Category of a failure. The CLI prints it as the stable machine-readable prefix.
enum class ErrorCode {
  kShape,
  kDomain,
  kInvalidArgument,
  kIo,
  kFormat,
  kData,
  kNotFound,
  kInternal,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error(ErrorCode::kShape, message) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error(ErrorCode::kDomain, message) {}
};

/// Throws Error(kInvalidArgument) with `message` unless `condition` holds.
inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::kInvalidArgument, message);
}

}  // namespace brainood
