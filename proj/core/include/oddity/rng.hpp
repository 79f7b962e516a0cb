#pragma once

#include <cstdint>
#include <utility>

namespace oddity {

/// Deterministic keyed random stream.
///
/// Streams built from distinct keys are statistically independent and a key
/// always replays the same sequence on every platform (no reliance on
/// std:: distributions, whose output is implementation-defined). The core
/// generator is xoshiro256++ seeded through a splitmix64 chain over the key
/// words; dataset code keys streams as (dataset_seed, sample_index) so that
/// samples can be generated out of order or in parallel with identical
/// results.
class RngStream {
 public:
  explicit RngStream(uint64_t k0, uint64_t k1 = 0, uint64_t k2 = 0,
                     uint64_t k3 = 0);

  uint64_t next_u64();

  /// Unbiased integer in [0, n); n must be > 0.
  uint64_t uniform_u64(uint64_t n);

  /// Inclusive bounds.
  int uniform_int(int lo, int hi);

  /// Uniform double in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0);

  double normal(double mean = 0.0, double stddev = 1.0);

  bool bernoulli(double p);

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_u64(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace oddity
