#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace csnn {

// Deterministic generator: xoshiro256++ seeded through splitmix64. The raw
// 64-bit stream is identical for a given seed on every platform; derived
// doubles are identical per platform (normal draws go through libm).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; draws come in pairs, the second is cached.
  double normal(double mean = 0.0, double std = 1.0);
  std::vector<double> normal_vec(std::size_t n, double mean, double std);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace csnn
