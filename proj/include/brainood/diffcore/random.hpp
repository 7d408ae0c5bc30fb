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

#include "brainood/common/rng.hpp"
#include "brainood/diffcore/matrix.hpp"

namespace brainood {

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else 1/(1−rate).
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

/// Symmetric n×n variant: one draw per unordered pair (i ≤ j), mirrored.
Matrix symmetric_dropout_mask(std::size_t n, double rate, Rng& rng);

/// Row-wise softmax (not recorded on any tape).
Matrix softmax(const Matrix& logits);

}  // namespace brainood
