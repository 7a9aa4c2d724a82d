#pragma once

#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

// Scalar diffusion-time conditioning: sinusoidal features of log-time,
// concatenated to the flattened window before the first layer.
inline constexpr int kTimeEmbedDim = 8;

Tensor time_embedding_rows(const std::vector<double>& times);  // [B, kTimeEmbedDim]

// Inpainting-style conditioning: overwrite the first state slot (flat
// columns [0, d)) of each window row with the conditioning state.
void clamp_first_state(Tensor& windows, const Tensor& cond, std::int64_t state_dim);

// Mask that zeroes the first state slot of a flattened window row.
Tensor first_state_mask(std::int64_t flat_dim, std::int64_t state_dim);

}  // namespace ctp
