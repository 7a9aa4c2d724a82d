#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctp/autodiff.hpp"
#include "ctp/checkpoint.hpp"
#include "ctp/mlp.hpp"
#include "ctp/schedule.hpp"
#include "ctp/tensor.hpp"

namespace ctp {

struct SolverSpec {
  int substeps = 1;  // Heun substeps covering one (t, u) interval
};

// Probability-flow-ODE denoiser with the skip-connection parameterization
// D(x, t) = c_skip(t)*x + c_out(t)*F(c_in(t)*x, emb(t)). At t = eps the
// output reproduces the input exactly. When `conditioned` is set, the first
// state slot is overwritten with the conditioning state before the network
// call and re-clamped after it.
struct TeacherModel {
  Mlp backbone;  // F: [H*d + kTimeEmbedDim] -> [H*d]
  NoiseSchedule schedule;
  double sigma_data = 0.5;
  std::int64_t horizon = 0;
  std::int64_t state_dim = 0;
  bool conditioned = false;
  std::shared_ptr<std::atomic<std::uint64_t>> eval_count =
      std::make_shared<std::atomic<std::uint64_t>>(0);

  std::int64_t flat_dim() const { return horizon * state_dim; }

  static TeacherModel create(std::int64_t horizon, std::int64_t state_dim,
                             const std::vector<std::int64_t>& hidden, const NoiseSchedule& sched,
                             double sigma_data, bool conditioned, Rng& rng);

  // x is [B, H*d]; t has one entry per row (or a single shared entry).
  // cond, when given, is [B, d].
  Tensor denoise(const Tensor& x, const std::vector<double>& t,
                 const Tensor* cond = nullptr) const;
  // Tape path used by the trainer; parameters come in lifted.
  ad::Var denoise(const Mlp::Vars& vars, const Tensor& x, const std::vector<double>& t,
                  const Tensor* cond = nullptr) const;

  Checkpoint to_checkpoint() const;
  static TeacherModel from_checkpoint(const Checkpoint& ckpt);
};

// Integrates dx/dt = (x - D(x,t))/t from t down to u with the second-order
// Heun scheme: Euler predictor, trapezoidal corrector averaging the
// endpoint slopes. A substep whose corrector endpoint falls below the time
// floor degenerates to plain Euler. Deterministic.
using DenoiseFn = std::function<Tensor(const Tensor& x, const std::vector<double>& t)>;
Tensor heun_integrate(const DenoiseFn& denoiser, double eps_floor, const Tensor& x,
                      const std::vector<double>& t, const std::vector<double>& u, int substeps);

Tensor heun_solve(const TeacherModel& model, const Tensor& x, double t, double u,
                  const SolverSpec& spec, const Tensor* cond = nullptr);

// Per-row intervals: row r integrates from t[r] down to u[r]; rows with
// u == t stay put.
Tensor heun_solve_rows(const TeacherModel& model, const Tensor& x, const std::vector<double>& t,
                       const std::vector<double>& u, const SolverSpec& spec,
                       const Tensor* cond = nullptr);

// One batch of the denoising regression: corrupt clean windows with
// sigma ~ p_train, denoise, and penalize the squared error (conditioning
// slot excluded when the model is conditioned). Returns the loss node;
// `vars` must be the lifted backbone parameters.
ad::Var teacher_loss(const TeacherModel& model, const Mlp::Vars& vars, const Tensor& clean,
                     const TrainNoiseDist& dist, Rng& rng);
// Convenience value-only form (fresh lift, no gradient kept).
double teacher_loss_value(const TeacherModel& model, const Tensor& clean,
                          const TrainNoiseDist& dist, Rng& rng);

struct TeacherTrainConfig {
  std::vector<std::int64_t> hidden = {96, 96};
  int steps = 8000;
  int batch_size = 128;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  TrainNoiseDist noise_dist;
  double sigma_data = 0.5;
  bool conditioned = false;
  std::string trace_path;  // CSV (step, loss, wallclock_ms), empty = none
  int log_every = 100;
};

struct TeacherTrainReport {
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  double final_train_loss = 0.0;
};

// Denoising-regression loop over normalized windows [N, H*d]. The held-out
// loss is evaluated with a fixed replayable noise draw so before/after
// values are comparable.
TeacherModel train_teacher(const Tensor& train_windows, const Tensor& holdout_windows,
                           std::int64_t horizon, std::int64_t state_dim,
                           const TeacherTrainConfig& cfg, TeacherTrainReport* report = nullptr);

}  // namespace ctp
