#pragma once

#include <cstdint>
#include <vector>

namespace scr {

// SplitMix64: seed mixer behind every stochastic stage, so a single master
// seed reproduces the whole run.
struct SplitMix64 {
  uint64_t state = 0;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

// xoshiro256** seeded via SplitMix64. All distributions are hand-rolled so
// results do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
  }

  uint64_t next_u64() {
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

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Fixed-offset derivation: each stochastic stage gets its own independent
// stream from the master seed.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  SplitMix64 sm(master ^ (stream * 0x9E3779B97F4A7C15ull));
  return sm.next();
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  SplitMix64 sm(a * 0xD1342543DE82EF95ull + b);
  return sm.next();
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

namespace seed_stream {
inline constexpr uint64_t kSplit = 0x01;
inline constexpr uint64_t kRegime = 0x02;
inline constexpr uint64_t kInit = 0x03;
inline constexpr uint64_t kBatches = 0x04;
inline constexpr uint64_t kWeakAug = 0x05;
inline constexpr uint64_t kStrongSelect = 0x06;
inline constexpr uint64_t kMock = 0x07;
}  // namespace seed_stream

}  // namespace scr
