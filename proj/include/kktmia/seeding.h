// Copyright 2026 The kktmia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KKTMIA_SEEDING_H_
#define KKTMIA_SEEDING_H_

#include <cstdint>
#include <string_view>

namespace kktmia {

// One SplitMix64 step. Used both as a mixer and as the stream generator for
// sub-seed derivation.
constexpr uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a named sub-seed from a master seed. The label is folded in with
// FNV-1a so that "train" and "solver" streams never collide:
//
//   sub = SplitMix64(master ^ SplitMix64(fnv1a(label)))
//
// Chains compose: DeriveSeed(DeriveSeed(m, "seed/3"), "train").
constexpr uint64_t DeriveSeed(uint64_t master, std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return SplitMix64(master ^ SplitMix64(h));
}

}  // namespace kktmia

#endif  // KKTMIA_SEEDING_H_
