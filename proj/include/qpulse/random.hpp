/*
   Copyright 2026 The qpulse Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

// Counter-based random streams. Each trajectory draws from an independent
// SplitMix64 stream keyed by (master seed, trajectory index), so results do
// not depend on which thread runs which trajectory.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qpulse {

inline constexpr std::string_view kRngName = "splitmix64-stream";
inline constexpr std::string_view kNormalSamplerName = "marsaglia-polar";

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RandomStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit RandomStream(std::uint64_t seed) : key_(splitmix64_mix(seed)) {}

  /// Stream for trajectory `index` of an ensemble seeded with `master_seed`.
  static RandomStream for_trajectory(std::uint64_t master_seed, std::uint64_t index) {
    return RandomStream(splitmix64_mix(master_seed ^ splitmix64_mix(index + kGolden)));
  }

  std::uint64_t next_u64() { return splitmix64_mix(key_ + kGolden * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal sample.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Skip ahead n raw draws.
  void jump(std::uint64_t n) {
    counter_ += n;
    has_spare_ = false;
  }

  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qpulse
