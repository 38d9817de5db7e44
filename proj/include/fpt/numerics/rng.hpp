#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fpt {

/// Deterministic random stream.
///
/// Engine: std::mt19937_64 (bit-exact across standard libraries by the C++
/// standard). The distribution layer is implemented here rather than taken from
/// <random>, whose distributions are implementation-defined:
///   uniform()  = (next() >> 11) * 2^-53, in [0, 1)
///   gaussian() = Box-Muller on (1 - u1, u2), caching the second variate
///   below(n)   = Lemire-style rejection on 64-bit draws
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline RandomStream seeded_rng(std::uint64_t seed) { return RandomStream(seed); }

/// SplitMix64 finalizer over (seed, index); used to give sub-tasks (trials,
/// channels, shards) independent reproducible seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace fpt
