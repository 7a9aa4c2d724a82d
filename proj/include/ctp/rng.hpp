#pragma once

#include <cstdint>
#include <random>

#include "ctp/tensor.hpp"

namespace ctp {

// Seeded random source. Derived streams are keyed by (seed, stream id) so
// work split across candidates/episodes reproduces the sequential result
// bit for bit regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream keyed off this rng's seed; does not advance *this.
  Rng derive(std::uint64_t stream) const;

  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // N(0, 1)
  std::int64_t uniform_int(std::int64_t n); // {0, ..., n-1}
  Tensor normal_tensor(std::vector<std::int64_t> shape);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ctp
