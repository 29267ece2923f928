#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pat {

// Counter-based generator built on the splitmix64 finalizer. Every stream is
// keyed by (seed, index, tag), so modules can derive independent substreams
// without sharing state, and a given draw sequence depends only on the key,
// never on what other streams did. This is what makes whole-pipeline runs
// bit-reproducible from a single seed.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t index = 0, std::string_view tag = {}) {
    uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_u64(h, seed);
    h = fnv_u64(h, index);
    for (char c : tag) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    key_ = h;
    state_ = h;
  }

  // Child stream derived from this stream's key; does not consume any draws.
  Rng split(uint64_t index, std::string_view tag = {}) const {
    return Rng(key_, index, tag);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends, bias-free via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit span
    uint64_t threshold = (0 - range) % range;
    for (;;) {
      uint64_t x = next_u64();
      if (x >= threshold) return lo + static_cast<int64_t>(x % range);
    }
  }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  static uint64_t fnv_u64(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h = (h ^ (v & 0xff)) * 0x100000001b3ull;
      v >>= 8;
    }
    return h;
  }

  uint64_t key_ = 0;
  uint64_t state_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace pat
