#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace coordconv {

// SplitMix64 (Steele/Lea/Flood, as published with the xoshiro generators).
// Counter-based: the state walks by a fixed golden-ratio increment and each
// output is a finalizing mix of the counter, so output i is a pure function
// of (seed, i). Reference outputs, seed = 0:
//   0xe220a8397b1dcdaf 0x6e789e6aa1b965f4 0x06c45d188009454f 0xf88bb8a8724c81ec
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller; the second variate of each pair is cached.
  double normal(double mean, double stddev) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // Independent derived stream. The xor mask is distinct and nonzero for
  // every id and the result is passed through the output mix, so derived
  // streams start at decorrelated counters.
  Rng stream(uint64_t id) const { return Rng(mix(state_ ^ (0x9E3779B97F4A7C15ull * (2 * id + 1)))); }

  // Fisher-Yates; index choice is next_u64() % (i + 1). The modulo bias is
  // irrelevant for our sizes and the method is trivially portable.
  template <class It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(i)>(next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Fixed stream ids for the derived streams used across the project.
inline constexpr uint64_t kStreamSplit = 1;    // uniform train/test shuffle
inline constexpr uint64_t kStreamInit = 2;     // weight init (then .stream(layer))
inline constexpr uint64_t kStreamShuffle = 3;  // batch order (then .stream(epoch))

}  // namespace coordconv
