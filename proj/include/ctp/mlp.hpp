#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctp/autodiff.hpp"
#include "ctp/rng.hpp"
#include "ctp/tensor.hpp"

namespace ctp {

// Fully-connected network with SiLU hidden activations and a linear head.
// Weights are [in, out] row-major so a batch forward is x*W + b.
struct MlpConfig {
  std::int64_t input_dim = 0;
  std::vector<std::int64_t> hidden;
  std::int64_t output_dim = 0;
};

class Mlp {
 public:
  Mlp() = default;
  static Mlp create(const MlpConfig& cfg, Rng& rng);
  static Mlp from_layers(std::vector<Tensor> weights, std::vector<Tensor> biases);

  // Plain inference path, x is [B, input_dim].
  Tensor forward(const Tensor& x) const;

  // Tape path: parameters lifted as leaves once, reusable across calls
  // within one step.
  struct Vars {
    std::vector<ad::Var> w, b;
  };
  Vars lift(bool requires_grad) const;
  ad::Var forward(const Vars& vars, const ad::Var& x) const;

  std::vector<std::pair<std::string, Tensor*>> named_params(const std::string& prefix = "");
  std::vector<std::pair<std::string, const Tensor*>> named_params(
      const std::string& prefix = "") const;

  std::int64_t input_dim() const;
  std::int64_t output_dim() const;
  std::size_t n_layers() const { return weights_.size(); }
  const Tensor& weight(std::size_t i) const { return weights_[i]; }
  const Tensor& bias(std::size_t i) const { return biases_[i]; }
  Tensor& weight(std::size_t i) { return weights_[i]; }
  Tensor& bias(std::size_t i) { return biases_[i]; }
  std::vector<std::int64_t> layer_sizes() const;

 private:
  std::vector<Tensor> weights_;  // [in, out] each
  std::vector<Tensor> biases_;   // [out] each
};

}  // namespace ctp
