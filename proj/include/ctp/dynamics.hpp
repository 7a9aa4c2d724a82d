#pragma once

#include <string>
#include <vector>

#include "ctp/checkpoint.hpp"
#include "ctp/dataset.hpp"
#include "ctp/mlp.hpp"
#include "ctp/rng.hpp"

namespace ctp {

// Discounted returns by backward recursion, truncated at the episode end
// with zero bootstrap: R_k = r_k + gamma*R_{k+1}, R_T = 0.
std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma);

// Action extractor h(s_k, s_{k+M}) -> a_k over normalized states; carries
// its normalizer so callers work in environment units.
struct InverseDynamics {
  Mlp net;  // [2*d_s] -> [d_a]
  std::int64_t state_dim = 0, action_dim = 0;
  int stride = 1;
  Normalizer norm;

  static InverseDynamics create(std::int64_t d_s, std::int64_t d_a, int stride,
                                const std::vector<std::int64_t>& hidden, const Normalizer& norm,
                                Rng& rng);

  // Normalized-space batch prediction, inputs [B, 2*d_s].
  Tensor predict(const Tensor& inputs) const;
  // Environment units in, environment units out.
  Tensor extract_action(const Tensor& s, const Tensor& s_next) const;  // [d_s],[d_s] -> [d_a]
  // Normalized window slots in (planner path), env units out.
  Tensor extract_action_normalized(const Tensor& s_norm, const Tensor& s_next_norm) const;

  Checkpoint to_checkpoint() const;
  static InverseDynamics from_checkpoint(const Checkpoint& ckpt);
};

// Trajectory-return regressor over flattened normalized windows.
struct Critic {
  Mlp net;  // [H*d_s] -> [1]
  std::int64_t horizon = 0, state_dim = 0;
  double gamma = 0.99;

  static Critic create(std::int64_t horizon, std::int64_t d_s, double gamma,
                       const std::vector<std::int64_t>& hidden, Rng& rng);

  std::vector<double> values(const Tensor& windows) const;  // [B, H*d_s] -> B scores

  Checkpoint to_checkpoint() const;
  static Critic from_checkpoint(const Checkpoint& ckpt);
};

// Plain MSE regression loop shared by the inverse-dynamics and critic
// trainers.
struct RegressionConfig {
  int steps = 2000;
  int batch_size = 128;
  double lr = 3e-4;
  double final_lr_fraction = 1.0;  // linear decay to lr*fraction over the run
  std::uint64_t seed = 0;
  std::string trace_path;
  int log_every = 100;
};

struct RegressionReport {
  double initial_holdout_mse = 0.0;
  double final_holdout_mse = 0.0;
  double final_train_loss = 0.0;
};

RegressionReport train_regression(Mlp& net, const Tensor& x, const Tensor& y,
                                  const Tensor& x_holdout, const Tensor& y_holdout,
                                  const RegressionConfig& cfg);

// Batch MSE of the inverse-dynamics model on normalized triples.
double invdyn_loss(const InverseDynamics& model, const TransitionSet& batch);

InverseDynamics train_invdyn(const Dataset& ds, const std::vector<std::int64_t>& hidden,
                             const RegressionConfig& cfg, RegressionReport* report = nullptr);

Critic train_critic(const Dataset& ds, double gamma, const std::vector<std::int64_t>& hidden,
                    const RegressionConfig& cfg, RegressionReport* report = nullptr);

}  // namespace ctp
