#include "ctp/rng.hpp"

#include "ctp/errors.hpp"

namespace ctp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::derive(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL)));
}

double Rng::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ContractError("uniform: lo must be < hi");
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw ContractError("uniform_int: n must be positive");
  return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
}

Tensor Rng::normal_tensor(std::vector<std::int64_t> shape) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = normal();
  return t;
}

}  // namespace ctp
