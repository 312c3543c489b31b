#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "planpaint/error.hpp"

namespace planpaint {

// splitmix64: used both to expand seeds into xoshiro state and as the mixing
// function for stream derivation. Reference: Vigna, public domain.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2bda16a883ULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a root seed, a purpose label and up
// to two integer coordinates (e.g. global step and sample index). The same
// inputs always produce the same stream on every platform, which is what lets
// training noise be a pure function of (seed, step, index) with no RNG state
// to checkpoint.
inline uint64_t derive_seed(uint64_t root, std::string_view purpose,
                            uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = root ^ 0x51d0f2a3c5b1e6d7ULL;
  for (char c : purpose) {
    h ^= static_cast<uint8_t>(c);
    h = splitmix64(h);
  }
  h ^= a;
  h = splitmix64(h);
  h ^= b;
  h = splitmix64(h);
  return h;
}

// xoshiro256++ 1.0 (Blackman & Vigna, public domain reference implementation).
// Small, fast, passes BigCrush; we avoid std::mt19937 because libstdc++ does
// not guarantee identical distribution output across versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
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

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n) via rejection sampling.
  uint64_t next_below(uint64_t n) {
    PP_CHECK(n > 0);
    const uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int next_int(int lo, int hi_inclusive) {
    PP_CHECK(lo <= hi_inclusive);
    return lo + static_cast<int>(next_below(
                    static_cast<uint64_t>(hi_inclusive - lo) + 1));
  }

  // Standard normal via Box-Muller. Both values of the pair are used so that
  // the sequence of normals consumed is a deterministic function of the
  // sequence of uniforms.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Guard against log(0); probability ~2^-53 but determinism demands a
    // defined result.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates shuffle with this generator's stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace planpaint
