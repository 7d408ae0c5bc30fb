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
#include <random>
#include <string>
#include <string_view>

namespace brainood {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds from one root.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the tag, folded into the root seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(root ^ mix64(h));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(root ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t root, std::string_view tag) { return Rng(derive_seed(root, tag)); }

/// Uniform on the open interval (0, 1); never returns an endpoint.
inline double uniform_open(Rng& rng) {
  // 53 random mantissa bits, offset by half an ulp so 0 is unreachable.
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

std::string rng_state(const Rng& rng);
void restore_rng_state(Rng& rng, const std::string& state);

}  // namespace brainood
