#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace fpr {

// Counter-keyed deterministic RNG. All randomness in the project flows
// through explicit 64-bit keys so that results are bit-reproducible and
// independent of call order or thread scheduling. std:: distributions are
// avoided on purpose: their output is implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x632be59bd9b4e019ULL + (b << 1)));
}

template <typename... Rest>
inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_key(mix_key(a, b), static_cast<std::uint64_t>(rest)...);
}

// FNV-1a; used for string keys and config digests (std::hash would be
// implementation-defined and break cross-build determinism).
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Small keyed stream generator (splitmix64 over an incrementing counter).
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(splitmix64(key)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Standard normal via Box-Muller (one value per call, pairs not cached so
  // the stream position is easy to reason about).
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace fpr
