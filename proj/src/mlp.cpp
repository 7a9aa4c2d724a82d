#include "ctp/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "ctp/errors.hpp"

namespace ctp {

namespace {
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace

Mlp Mlp::create(const MlpConfig& cfg, Rng& rng) {
  if (cfg.input_dim <= 0 || cfg.output_dim <= 0)
    throw ContractError("Mlp::create: non-positive layer size");
  std::vector<std::int64_t> dims;
  dims.push_back(cfg.input_dim);
  for (auto h : cfg.hidden) {
    if (h <= 0) throw ContractError("Mlp::create: non-positive hidden size");
    dims.push_back(h);
  }
  dims.push_back(cfg.output_dim);

  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::int64_t fan_in = dims[l], fan_out = dims[l + 1];
    const bool last = (l + 2 == dims.size());
    const double std = std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(fan_in));
    Tensor w({fan_in, fan_out});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
    mlp.weights_.push_back(std::move(w));
    mlp.biases_.push_back(Tensor::zeros({fan_out}));
  }
  return mlp;
}

Mlp Mlp::from_layers(std::vector<Tensor> weights, std::vector<Tensor> biases) {
  if (weights.empty() || weights.size() != biases.size())
    throw ContractError("Mlp::from_layers: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rank() != 2 || biases[l].rank() != 1 ||
        weights[l].cols() != biases[l].size())
      throw DimensionError("Mlp::from_layers: weight/bias shape mismatch at layer " +
                           std::to_string(l));
    if (l > 0 && weights[l - 1].cols() != weights[l].rows())
      throw DimensionError("Mlp::from_layers: consecutive layers incompatible at layer " +
                           std::to_string(l));
  }
  Mlp mlp;
  mlp.weights_ = std::move(weights);
  mlp.biases_ = std::move(biases);
  return mlp;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim())
    throw DimensionError("Mlp::forward: input " + x.shape_str() + " does not match input_dim " +
                         std::to_string(input_dim()));
  Tensor cur = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Tensor& w = weights_[l];
    Tensor next({cur.rows(), w.cols()});
    MatMap(next.data(), next.rows(), next.cols()) =
        ConstMatMap(cur.data(), cur.rows(), cur.cols()) *
        ConstMatMap(w.data(), w.rows(), w.cols());
    const Tensor& b = biases_[l];
    for (std::int64_t r = 0; r < next.rows(); ++r)
      for (std::int64_t c = 0; c < next.cols(); ++c) next[r * next.cols() + c] += b[c];
    if (l + 1 < weights_.size())
      for (std::int64_t i = 0; i < next.size(); ++i) {
        const double v = next[i];
        next[i] = v / (1.0 + std::exp(-v));
      }
    cur = std::move(next);
  }
  return cur;
}

Mlp::Vars Mlp::lift(bool requires_grad) const {
  Vars vars;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    vars.w.push_back(ad::leaf(weights_[l], requires_grad));
    vars.b.push_back(ad::leaf(biases_[l], requires_grad));
  }
  return vars;
}

ad::Var Mlp::forward(const Vars& vars, const ad::Var& x) const {
  if (vars.w.size() != weights_.size())
    throw ContractError("Mlp::forward(tape): vars do not match this network");
  ad::Var cur = x;
  for (std::size_t l = 0; l < vars.w.size(); ++l) {
    cur = ad::add_rowwise(ad::matmul(cur, vars.w[l]), vars.b[l]);
    if (l + 1 < vars.w.size()) cur = ad::silu(cur);
  }
  return cur;
}

std::vector<std::pair<std::string, Tensor*>> Mlp::named_params(const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(prefix + "l" + std::to_string(l) + ".w", &weights_[l]);
    out.emplace_back(prefix + "l" + std::to_string(l) + ".b", &biases_[l]);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Mlp::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(prefix + "l" + std::to_string(l) + ".w", &weights_[l]);
    out.emplace_back(prefix + "l" + std::to_string(l) + ".b", &biases_[l]);
  }
  return out;
}

std::int64_t Mlp::input_dim() const {
  if (weights_.empty()) throw ContractError("Mlp: empty network");
  return weights_.front().rows();
}

std::int64_t Mlp::output_dim() const {
  if (weights_.empty()) throw ContractError("Mlp: empty network");
  return weights_.back().cols();
}

std::vector<std::int64_t> Mlp::layer_sizes() const {
  std::vector<std::int64_t> dims;
  dims.push_back(input_dim());
  for (const auto& w : weights_) dims.push_back(w.cols());
  return dims;
}

}  // namespace ctp
