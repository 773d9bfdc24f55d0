#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvmol/error.hpp"

namespace mvmol {

namespace detail {
// SplitMix64 finalizer (Steele, Lea, Flood 2014). Pure integer mixing, so the
// stream is identical on every platform.
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Seedable counter-based generator. The state is a 64-bit counter advanced by
/// the SplitMix64 increment; each draw is the SplitMix64 finalizer of the
/// state. split(key) derives an independent stream deterministically, which
/// is how per-molecule / per-step substreams are made reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Independent substream for `key`; does not disturb this stream.
  Rng split(uint64_t key) const {
    return Rng(detail::mix64(state_ ^ detail::mix64(key ^ 0x632BE59BD9B4E019ull)));
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    require(n > 0, ErrorKind::Value, "uniform_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no caching, so the
  /// stream position is a fixed function of the draw count).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Normal(0, std) rejected outside ±2 std, the usual init for transformer
  /// weights.
  double truncated_normal(double std_dev) {
    for (;;) {
      double z = normal();
      if (std::fabs(z) <= 2.0) return z * std_dev;
    }
  }

  /// Index sampled with probability weights[i] / sum(weights).
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      require(w >= 0.0, ErrorKind::Value, "categorical: negative weight");
      total += w;
    }
    require(total > 0.0, ErrorKind::Value, "categorical: all weights zero");
    double r = uniform01() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace mvmol
