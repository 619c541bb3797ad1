#ifndef CYCCONF_RNG_HPP_
#define CYCCONF_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace cycconf {

// Counter-based pseudo-random generator. The i-th output word (i starting
// at 0) is fully determined by the seed:
//
//   word(seed, i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)
//
// where mix64 is the splitmix64 finalizer:
//
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27;  z *= 0x94D049BB133111EB;
//   z ^= z >> 31;
//
// Derived values:
//   next_double()        = (word >> 11) * 2^-53, uniform in [0, 1)
//   uniform(lo, hi)      = lo + next_double() * (hi - lo)
//   uniform_int(lo, hi)  = lo + word % (hi - lo + 1), inclusive bounds
//   normal()             = Box-Muller; consumes two words, returns
//                          sqrt(-2 ln u1) * cos(2 pi u2) with u1 in (0,1]
//   derive(seed, k)      = mix64(seed ^ mix64(k + 1)), independent substream
//
// The recipe is spelled out so any language can reproduce the streams
// bit-exactly; everything random in this project flows through it.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  static uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  static uint64_t derive(uint64_t seed, uint64_t stream) {
    return mix64(seed ^ mix64(stream + 1));
  }

  uint64_t next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

  // Inclusive bounds. Modulo bias is irrelevant at the ranges used here.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() %
                                     static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace cycconf

#endif  // CYCCONF_RNG_HPP_
