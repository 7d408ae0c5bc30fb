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

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "brainood/diffcore/kernels.hpp"

namespace brainood::kernels {

#if defined(BRAINOOD_HAVE_AVX2)
const KernelTable* avx2_table_if_compiled();
#endif
#if defined(BRAINOOD_HAVE_NEON)
const KernelTable* neon_table_if_compiled();
#endif

const KernelTable* avx2() {
#if defined(BRAINOOD_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? avx2_table_if_compiled() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon() {
#if defined(BRAINOOD_HAVE_NEON)
  return neon_table_if_compiled();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* by_name(std::string_view name) {
  if (name == "scalar") return &scalar();
  if (name == "avx2") return avx2();
  if (name == "neon") return neon();
  return nullptr;
}

const KernelTable* initial_choice() {
  if (const char* forced = std::getenv("BRAINOOD_KERNELS")) {
    if (const KernelTable* t = by_name(forced)) return t;
  }
  if (const KernelTable* t = avx2()) return t;
  if (const KernelTable* t = neon()) return t;
  return &scalar();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{initial_choice()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelTable* t = by_name(name);
  if (t == nullptr) return false;
  slot().store(t);
  return true;
}

}  // namespace brainood::kernels
