// Copyright 2026 the pssdet authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string_view>

namespace pssdet {

// splitmix64. Self-contained so streams are stable across platforms and
// standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // [0, n)
  int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  bool next_bool() { return (next_u64() & 1ull) != 0; }

 private:
  uint64_t state_;
};

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t mix_u64(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Independent stream derived from a base seed and a label, so adding or
// removing one consumer never shifts another consumer's stream.
inline Rng derived_rng(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  return Rng(mix_u64(mix_u64(mix_u64(seed, hash_str(tag)), a), b));
}

// Same derivation as a plain seed, for consumers that seed other subsystems.
inline uint64_t derived_seed(uint64_t seed, std::string_view tag, uint64_t a = 0) {
  return mix_u64(mix_u64(seed, hash_str(tag)), a);
}

}  // namespace pssdet
