#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace atdt {

// splitmix64: used both as a stream-derivation hash and to seed xoshiro.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent seed for a named consumer. Stream independence by
// tag means adding or removing one consumer never shifts another's draws.
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  uint64_t s = master ^ fnv1a64(tag);
  return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
  uint64_t s = master ^ fnv1a64(tag);
  s = splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ULL * (index + 1);
  return splitmix64(s);
}

// xoshiro256++, seeded via splitmix64. Deterministic across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    have_gauss_ = false;
    gauss_ = 0.0;
  }

  uint64_t next_u64() {
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

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Marsaglia polar method; caches the second deviate.
  double gaussian() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    gauss_ = v * f;
    have_gauss_ = true;
    return u * f;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
  bool have_gauss_;
  double gauss_;
};

// Stateless per-coordinate hash into [0,1); used for pixel-level noise so
// results do not depend on evaluation order.
inline double hash01(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t s = a * 0x9e3779b97f4a7c15ULL ^ b * 0xbf58476d1ce4e5b9ULL ^
               c * 0x94d049bb133111ebULL ^ d * 0x2545f4914f6cdd1dULL;
  uint64_t z = splitmix64(s);
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

}  // namespace atdt
