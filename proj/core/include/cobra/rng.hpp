#pragma once

#include <cstdint>

namespace cobra {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// One splitmix64 scramble of a value; used for deterministic work payloads.
inline uint64_t mix64(uint64_t x) {
  uint64_t s = x;
  return splitmix64(s);
}

// Derives an independent stream seed from a master seed and a tuple of
// indices (experiment cell, repetition, worker id, ...).
inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> parts) {
  uint64_t s = master ^ 0x6a09e667f3bcc909ull;
  for (uint64_t p : parts) {
    s ^= mix64(p + 0x9e3779b97f4a7c15ull);
    s = mix64(s);
  }
  return s;
}

// xoshiro256** by Blackman & Vigna; small, fast, good enough for victim
// selection and schedule sampling.
class Xoshiro256 {
 public:
  explicit Xoshiro256(uint64_t seed = 1) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Unbiased integer in [0, bound).
  uint64_t below(uint64_t bound) {
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  double uniform01() { return (next() >> 11) * 0x1.0p-53; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace cobra
