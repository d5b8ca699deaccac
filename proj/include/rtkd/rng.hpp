#pragma once

#include <cstdint>

namespace rtkd {

/// xoshiro256** seeded through splitmix64. The distributions below are
/// written out by hand so that a seed reproduces the same stream on every
/// standard library (std::normal_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal by Box-Muller; both halves of each pair are used.
  double normal();
  /// Normal(0, sigma) redrawn until it lies within two sigma.
  double truncated_normal(double sigma);

  /// Derives an independent stream, e.g. one per sequence or per epoch.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace rtkd
