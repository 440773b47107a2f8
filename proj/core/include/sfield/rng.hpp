#pragma once

#include <cstdint>

namespace sfield {

// Counter-based generator built on splitmix64. Streams are derived from
// (seed, tag, indices...) so any draw is reproducible independent of thread
// scheduling or call order elsewhere in the program.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x853c49e6748fea9bULL)) {}

  // Derive a decorrelated child stream.
  Rng fork(uint64_t tag) const { return Rng(splitmix64(state_ ^ tag * 0x2545f4914f6cdd1dULL)); }

  uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

}  // namespace sfield
