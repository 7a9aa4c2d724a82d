#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctp/autodiff.hpp"
#include "ctp/checkpoint.hpp"
#include "ctp/mlp.hpp"
#include "ctp/schedule.hpp"
#include "ctp/teacher.hpp"

namespace ctp {

// Consistency trajectory student G(x,t,w) = (w/t)x + (1-w/t)g(x,t,w) where
// g keeps the teacher's skip parameterization plus a w-embedding input.
// G(x,t,t) = x holds structurally for any network.
struct StudentModel {
  Mlp backbone;  // [H*d + 2*kTimeEmbedDim] -> [H*d]
  NoiseSchedule schedule;
  double sigma_data = 0.5;
  std::int64_t horizon = 0;
  std::int64_t state_dim = 0;
  bool conditioned = false;
  std::shared_ptr<std::atomic<std::uint64_t>> eval_count =
      std::make_shared<std::atomic<std::uint64_t>>(0);

  std::int64_t flat_dim() const { return horizon * state_dim; }

  // Teacher weight copy with a zero-initialized w-embedding pathway, so the
  // fresh student reproduces the teacher for every w.
  static StudentModel from_teacher(const TeacherModel& teacher);

  // g_theta: the network half of the mixture (skip-parameterized denoiser
  // conditioned on both t and w).
  Tensor g(const Tensor& x, const std::vector<double>& t, const std::vector<double>& w,
           const Tensor* cond = nullptr) const;
  ad::Var g(const Mlp::Vars& vars, const ad::Var& x, const std::vector<double>& t,
            const std::vector<double>& w, const Tensor* cond = nullptr) const;

  // G_theta: mixture jump from time t to w (requires eps <= w <= t <= t_max);
  // the first state slot is re-clamped after evaluation when conditioned.
  Tensor forward(const Tensor& x, const std::vector<double>& t, const std::vector<double>& w,
                 const Tensor* cond = nullptr) const;
  ad::Var forward(const Mlp::Vars& vars, const ad::Var& x, const std::vector<double>& t,
                  const std::vector<double>& w, const Tensor* cond = nullptr) const;

  Checkpoint to_checkpoint() const;
  static StudentModel from_checkpoint(const Checkpoint& ckpt);
};

// Window critic for the adversarial term; sigmoid head keeps the output
// strictly inside (0,1).
struct Discriminator {
  Mlp net;  // [H*d] -> [1]

  static Discriminator create(std::int64_t flat_dim, const std::vector<std::int64_t>& hidden,
                              Rng& rng);
  Tensor prob(const Tensor& windows) const;  // [B,1] in (0,1)
  ad::Var prob(const Mlp::Vars& vars, const ad::Var& windows) const;

  Checkpoint to_checkpoint() const;
  static Discriminator from_checkpoint(const Checkpoint& ckpt);
};

struct DistillConfig {
  double lambda_dsm = 1.0;
  double lambda_gan = 0.0;
  double mu_ema = 0.999;
  int batch_size = 128;
  int steps = 10000;
  double lr = 8e-6;
  double disc_lr_scale = 10.0;  // discriminator lr = lr * scale
  SolverSpec solver;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> disc_hidden = {64, 64};
  std::string trace_path;  // per-step CSV, empty = no trace
  int log_every = 100;
};

// Solver jump t->u with the teacher, then target-model jump u->w (Eq. 7
// shape). No gradient is carried; w <= u < t.
Tensor compute_target(const TeacherModel& teacher, const StudentModel& target_model,
                      const Tensor& x_t, double t, double u, double w, const SolverSpec& spec,
                      const Tensor* cond = nullptr);

// One distillation batch with everything sampled: used by the losses below
// and by the training loop so tests can pin every input.
struct DistillBatch {
  Tensor x0;     // [B, H*d] clean windows
  Tensor x_t;    // corrupted at per-row t (conditioning slot clamped)
  Tensor cond;   // [B, d] when conditioned, else empty
  std::vector<double> t, w, u;
};

DistillBatch sample_distill_batch(const StudentModel& student, const Tensor& windows,
                                  const std::vector<double>& grid_times, int batch_size, Rng& rng);

// Squared l2 between the two time-floor transports (Eq. 9 shape): gradient
// flows only through the inner student jump of x_est.
ad::Var ctm_loss(const StudentModel& student, const Mlp::Vars& student_vars,
                 const StudentModel& target_model, const TeacherModel& teacher,
                 const DistillBatch& batch, const SolverSpec& spec, ad::Var* x_est_out = nullptr);

// Denoising regression of the raw g network at w = t.
ad::Var dsm_loss(const StudentModel& student, const Mlp::Vars& student_vars,
                 const DistillBatch& batch);

// Generator side: the non-saturating complement -mean log d(x_est), with
// gradient flowing into the student through x_est; the discriminator
// parameters come in frozen.
ad::Var gan_generator_term(const Discriminator& disc, const Mlp::Vars& frozen_disc_vars,
                           const ad::Var& x_est, std::int64_t* clamp_count);

// Discriminator side: the Eq. 11 objective mean log d(x0) + mean
// log(1 - d(x_est)) on detached samples; ascended by the eta update.
ad::Var gan_discriminator_objective(const Discriminator& disc, const Mlp::Vars& disc_vars,
                                    const Tensor& x0, const Tensor& x_est_detached,
                                    std::int64_t* clamp_count);

// Value-level pair (generator term, Eq. 11 objective) with x_est built as
// in ctm_loss from the given batch.
struct GanLossValues {
  double generator;
  double discriminator;
  std::int64_t clamp_count;
};
GanLossValues gan_losses(const StudentModel& student, const StudentModel& target_model,
                         const Discriminator& disc, const DistillBatch& batch);

double total_loss(double ctm, double dsm, double gan, double lambda_dsm, double lambda_gan);

struct DistillResult {
  StudentModel student;
  StudentModel target;
  Discriminator disc;  // only meaningful when lambda_gan > 0
  bool has_disc = false;
  std::vector<double> loss_trace;  // total loss per logged step
};

// Algorithm-1 loop: sample x0, noise, (t,w,u); solver jump; descend the
// student; ascend the discriminator; EMA-update the target.
DistillResult distill(const TeacherModel& teacher, const Tensor& windows,
                      const DistillConfig& config);

}  // namespace ctp
