#pragma once

#include <cstdint>
#include <random>

namespace post {

/// Counter-based stream derivation: mixes (master, stream) through two
/// splitmix64 rounds, so streams can be created in any order.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

/// Deterministic sampler over mt19937_64. Normal draws use Box-Muller
/// without a cached spare and Poisson draws use inversion below mean 30 and
/// PTRS rejection above, so the draw sequence depends only on the seed and
/// the call sequence, not on library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double a, double b);
  double normal();
  double normal(double mean, double sd);
  int bernoulli(double p);
  long poisson(double mean);

 private:
  std::mt19937_64 gen_;
};

}  // namespace post
