// Copyright 2026 The Facefit Authors
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

// Self-contained deterministic RNG. Standard-library distributions are not
// bit-reproducible across implementations, and several outputs of this
// project are compared byte-for-byte, so all randomness goes through here.

#ifndef FACEFIT_CORE_RNG_HPP_
#define FACEFIT_CORE_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace facefit {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Standard normal via Box-Muller; draws two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Normal truncated to [-bound_sigmas, bound_sigmas] standard deviations.
  double truncated_normal(double sigma, double bound_sigmas) {
    for (;;) {
      double g = normal();
      if (std::abs(g) <= bound_sigmas) return g * sigma;
    }
  }

 private:
  uint64_t state_;
};

// Stateless position hash for procedural patterns; identical for identical
// (x, y, seed) regardless of evaluation order.
inline uint64_t hash_coords(int64_t x, int64_t y, uint64_t seed) {
  uint64_t h = seed ^ 0x8a5cd789635d2dffull;
  h ^= static_cast<uint64_t>(x) * 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 29)) * 0xbf58476d1ce4e5b9ull;
  h ^= static_cast<uint64_t>(y) * 0xc2b2ae3d27d4eb4full;
  h = (h ^ (h >> 32)) * 0x94d049bb133111ebull;
  return h ^ (h >> 29);
}

// Hash mapped to [0, 1).
inline double hash_unit(int64_t x, int64_t y, uint64_t seed) {
  return static_cast<double>(hash_coords(x, y, seed) >> 11) * 0x1.0p-53;
}

}  // namespace facefit

#endif  // FACEFIT_CORE_RNG_HPP_
