#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed, ordered parameter list. Moment buffers mirror the
// parameter shapes; the step count only moves forward.
class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<std::pair<std::string, Tensor*>>& params);

  // grads must align 1:1 with the parameter list given at construction.
  // A NaN/Inf gradient aborts with the offending parameter's name.
  void step(const std::vector<Tensor>& grads);

  std::int64_t step_count() const { return step_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
};

// target <- mu*target + (1-mu)*online, elementwise. mu outside [0,1] is a
// contract error.
void ema_update(Tensor& target, const Tensor& online, double mu);
void ema_update(std::vector<std::pair<std::string, Tensor*>> target,
                const std::vector<std::pair<std::string, const Tensor*>>& online, double mu);

}  // namespace ctp
