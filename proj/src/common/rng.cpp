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

#include "brainood/common/rng.hpp"

#include <sstream>

#include "brainood/common/error.hpp"

namespace brainood {

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (in.fail()) throw Error(ErrorCode::kFormat, "corrupt rng state");
}

}  // namespace brainood
