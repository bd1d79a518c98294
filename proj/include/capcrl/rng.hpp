#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace capcrl {

/// splitmix64 finalizer; used to fan a master seed out into independent streams.
std::uint64_t mix_seed(std::uint64_t x);

/// Derives a child seed from a parent seed and a path of stream ids
/// (e.g. {domain, node}). Pure function of its inputs.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// xoshiro256** generator. The variate transforms below are implemented here
/// rather than with <random> distributions so streams replay bit-exactly
/// across standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1); safe as a log argument.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// k distinct indices from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);
  std::vector<int> permutation(int n);

private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace capcrl
