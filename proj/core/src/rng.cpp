#include "oddity/rng.hpp"

#include <cmath>

#include "oddity/error.hpp"

namespace oddity {

namespace {

uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(uint64_t k0, uint64_t k1, uint64_t k2, uint64_t k3) {
  // Chain all key words through splitmix64 so that (a, 0) and (0, a) seed
  // unrelated states.
  uint64_t x = 0x8AD8257E5A14B1F5ULL;
  x ^= splitmix64(x) + k0;
  s_[0] = splitmix64(x);
  x ^= splitmix64(x) + k1;
  s_[1] = splitmix64(x);
  x ^= splitmix64(x) + k2;
  s_[2] = splitmix64(x);
  x ^= splitmix64(x) + k3;
  s_[3] = splitmix64(x);
  // xoshiro must not start from the all-zero state.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

uint64_t RngStream::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

uint64_t RngStream::uniform_u64(uint64_t n) {
  if (n == 0) throw ValueError("uniform_u64: n must be > 0");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

int RngStream::uniform_int(int lo, int hi) {
  if (hi < lo) throw ValueError("uniform_int: hi < lo");
  return lo + static_cast<int>(
                  uniform_u64(static_cast<uint64_t>(hi) - lo + 1));
}

double RngStream::uniform(double lo, double hi) {
  const double u =
      static_cast<double>(next_u64() >> 11) * 0x1.0p-53;  // [0, 1)
  return lo + (hi - lo) * u;
}

double RngStream::normal(double mean, double stddev) {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return mean + stddev * cached_normal_;
  }
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return mean + stddev * r * std::cos(a);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

}  // namespace oddity
