/* Copyright 2026 The cldet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef CLDET_RNG_HPP_
#define CLDET_RNG_HPP_

#include <cstdint>

namespace cldet {

// SplitMix64 (Steele, Lea & Flood; public-domain reference constants).
// The single PRNG used throughout the project: dataset synthesis, weight
// init, shuffling and buffer sampling all draw from it so every artifact is
// reproducible from integer seeds alone. The mapping from raw 64-bit draws
// to doubles/ints is fixed here and must not change.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling on the
  // largest multiple of the span keeps the mapping exactly uniform.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t raw;
    do {
      raw = next();
    } while (raw >= limit);
    return lo + static_cast<int64_t>(raw % span);
  }

 private:
  uint64_t state_;
};

// Derives an independent stream seed from a base seed and a stream tag by
// running one scrambling round over the combined words.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  SplitMix64 g(base ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  return g.next();
}

}  // namespace cldet

#endif  // CLDET_RNG_HPP_
