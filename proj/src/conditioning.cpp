#include "ctp/conditioning.hpp"

#include <cmath>

#include "ctp/errors.hpp"

namespace ctp {

Tensor time_embedding_rows(const std::vector<double>& times) {
  static const double freqs[4] = {0.25, 0.5, 1.0, 2.0};
  const auto rows = static_cast<std::int64_t>(times.size());
  Tensor out({rows, kTimeEmbedDim});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double t = times[static_cast<std::size_t>(r)];
    if (!(t > 0.0)) throw ContractError("time_embedding: time must be positive");
    const double u = std::log(t);
    for (int f = 0; f < 4; ++f) {
      out[r * kTimeEmbedDim + 2 * f] = std::sin(freqs[f] * u);
      out[r * kTimeEmbedDim + 2 * f + 1] = std::cos(freqs[f] * u);
    }
  }
  return out;
}

void clamp_first_state(Tensor& windows, const Tensor& cond, std::int64_t state_dim) {
  if (windows.rank() != 2 || cond.rank() != 2 || windows.rows() != cond.rows() ||
      cond.cols() != state_dim)
    throw DimensionError("clamp_first_state: windows " + windows.shape_str() + " vs cond " +
                         cond.shape_str());
  const std::int64_t flat = windows.cols();
  for (std::int64_t r = 0; r < windows.rows(); ++r)
    for (std::int64_t j = 0; j < state_dim; ++j) windows[r * flat + j] = cond[r * state_dim + j];
}

Tensor first_state_mask(std::int64_t flat_dim, std::int64_t state_dim) {
  Tensor mask = Tensor::full({flat_dim}, 1.0);
  for (std::int64_t j = 0; j < state_dim; ++j) mask[j] = 0.0;
  return mask;
}

}  // namespace ctp
