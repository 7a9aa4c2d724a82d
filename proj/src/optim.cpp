#include "ctp/optim.hpp"

#include <cmath>

#include "ctp/errors.hpp"

namespace ctp {

Adam::Adam(AdamConfig cfg, const std::vector<std::pair<std::string, Tensor*>>& params)
    : cfg_(cfg) {
  for (const auto& [name, p] : params) {
    names_.push_back(name);
    params_.push_back(p);
    m_.push_back(Tensor::zeros(p->shape()));
    v_.push_back(Tensor::zeros(p->shape()));
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ContractError("Adam::step: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(*params_[i]))
      throw DimensionError("Adam::step: gradient shape mismatch for " + names_[i]);
    if (!grads[i].all_finite())
      throw DivergenceError("non-finite gradient for parameter " + names_[i]);
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const Tensor& g = grads[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void ema_update(Tensor& target, const Tensor& online, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ContractError("ema_update: mu outside [0,1]");
  if (!target.same_shape(online)) throw DimensionError("ema_update: shape mismatch");
  for (std::int64_t i = 0; i < target.size(); ++i)
    target[i] = mu * target[i] + (1.0 - mu) * online[i];
}

void ema_update(std::vector<std::pair<std::string, Tensor*>> target,
                const std::vector<std::pair<std::string, const Tensor*>>& online, double mu) {
  if (target.size() != online.size()) throw ContractError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i)
    ema_update(*target[i].second, *online[i].second, mu);
}

}  // namespace ctp
