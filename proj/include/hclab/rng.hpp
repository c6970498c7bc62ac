#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace hclab::rng {

// SplitMix64 mixing step (Steele/Lea/Vigna). Used as the core of a
// counter-based scheme: every random draw is a pure function of a key,
// so realizations and cells never share mutable generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive combination of words into a single key.
inline std::uint64_t mix(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (auto w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

// Zigzag encoding so that negative lattice coordinates mix cleanly.
inline std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

// Uniform double in [0,1) from the 53 high bits.
inline double unit_double(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Keyed counter stream.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}
  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }
  double next_unit() { return unit_double(next_u64()); }
  // standard normal via Box-Muller, only used for generic start vectors
  double next_normal() {
    double u1 = next_unit(), u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace hclab::rng
