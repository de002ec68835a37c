// core/include/pacrnn/rng.h

// Copyright 2026  The pacrnn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PACRNN_RNG_H_
#define PACRNN_RNG_H_

#include <cstdint>
#include <vector>

namespace pacrnn {

// Portable seeded pseudo-random generator. The state update is splitmix64
// (Steele, Lea, Flood 2014):
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
//
// Every derived draw (unit doubles, bounded integers, gaussians, shuffles)
// is defined purely in terms of this 64-bit stream, so a fixed seed yields
// an identical stream on any conforming platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t seed_state() const { return state_; }

  // Next raw 64-bit value.
  uint64_t next_u64();

  // Uniform double in [0, 1), using the top 53 bits of next_u64().
  double next_unit();

  // Uniform double in [lo, hi).
  double next_uniform(double lo, double hi);

  // Unbiased integer in [0, n) by rejection sampling. n must be > 0.
  uint64_t next_below(uint64_t n);

  // Standard normal via the Box-Muller transform. Draws two units per pair
  // and caches the second value.
  double next_gaussian();

  // Seeded Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>* v) {
    if (v->empty()) return;
    for (uint64_t i = v->size() - 1; i > 0; --i) {
      uint64_t j = next_below(i + 1);
      std::swap((*v)[i], (*v)[j]);
    }
  }

 private:
  uint64_t state_;
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace pacrnn

#endif  // PACRNN_RNG_H_
