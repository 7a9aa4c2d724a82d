#include "ctp/ctm.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctp/conditioning.hpp"
#include "ctp/errors.hpp"
#include "ctp/optim.hpp"

namespace ctp {

namespace {

double c_in(double t, double sigma_data) {
  return 1.0 / std::sqrt(t * t + sigma_data * sigma_data);
}

std::vector<double> broadcast_times(const std::vector<double>& t, std::int64_t rows,
                                    const char* who) {
  if (t.size() == static_cast<std::size_t>(rows)) return t;
  if (t.size() == 1) return std::vector<double>(static_cast<std::size_t>(rows), t[0]);
  throw DimensionError(std::string(who) + ": times must have 1 or batch-size entries");
}

void check_jump(const std::vector<double>& t, const std::vector<double>& w,
                const NoiseSchedule& s, const char* who) {
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (w[r] > t[r]) throw ContractError(std::string(who) + ": require w <= t");
    if (w[r] < s.eps || t[r] > s.t_max)
      throw ContractError(std::string(who) + ": times outside [eps, t_max]");
  }
}

}  // namespace

StudentModel StudentModel::from_teacher(const TeacherModel& teacher) {
  StudentModel m;
  m.schedule = teacher.schedule;
  m.sigma_data = teacher.sigma_data;
  m.horizon = teacher.horizon;
  m.state_dim = teacher.state_dim;
  m.conditioned = teacher.conditioned;

  const std::int64_t flat = teacher.flat_dim();
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l < teacher.backbone.n_layers(); ++l) {
    const Tensor& tw = teacher.backbone.weight(l);
    if (l == 0) {
      // Extra input rows for the w embedding start at zero so the fresh
      // student matches the teacher for every w.
      Tensor w({flat + 2 * kTimeEmbedDim, tw.cols()});
      for (std::int64_t r = 0; r < tw.rows(); ++r)
        for (std::int64_t c = 0; c < tw.cols(); ++c) w.at(r, c) = tw.at(r, c);
      ws.push_back(std::move(w));
    } else {
      ws.push_back(tw);
    }
    bs.push_back(teacher.backbone.bias(l));
  }
  m.backbone = Mlp::from_layers(std::move(ws), std::move(bs));
  return m;
}

Tensor StudentModel::g(const Tensor& x, const std::vector<double>& t,
                       const std::vector<double>& w, const Tensor* cond) const {
  if (x.rank() != 2 || x.cols() != flat_dim()) throw DimensionError("g: input " + x.shape_str());
  const auto tv = broadcast_times(t, x.rows(), "g");
  const auto wv = broadcast_times(w, x.rows(), "g");

  Tensor xin = x;
  if (conditioned && cond) clamp_first_state(xin, *cond, state_dim);
  Tensor input({x.rows(), flat_dim() + 2 * kTimeEmbedDim});
  Tensor temb = time_embedding_rows(tv);
  Tensor wemb = time_embedding_rows(wv);
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const double ci = c_in(tv[static_cast<std::size_t>(r)], sigma_data);
    for (std::int64_t c = 0; c < flat_dim(); ++c)
      input[r * input.cols() + c] = ci * xin[r * flat_dim() + c];
    for (std::int64_t c = 0; c < kTimeEmbedDim; ++c) {
      input[r * input.cols() + flat_dim() + c] = temb[r * kTimeEmbedDim + c];
      input[r * input.cols() + flat_dim() + kTimeEmbedDim + c] = wemb[r * kTimeEmbedDim + c];
    }
  }
  eval_count->fetch_add(1, std::memory_order_relaxed);
  Tensor f = backbone.forward(input);
  Tensor out({x.rows(), flat_dim()});
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const SkipCoeffs sc = skip_coeffs(tv[static_cast<std::size_t>(r)], sigma_data, schedule.eps);
    for (std::int64_t c = 0; c < flat_dim(); ++c)
      out[r * flat_dim() + c] =
          sc.c_skip * xin[r * flat_dim() + c] + sc.c_out * f[r * flat_dim() + c];
  }
  return out;
}

ad::Var StudentModel::g(const Mlp::Vars& vars, const ad::Var& x, const std::vector<double>& t,
                        const std::vector<double>& w, const Tensor* cond) const {
  const std::int64_t rows = x.value().rows();
  const auto tv = broadcast_times(t, rows, "g");
  const auto wv = broadcast_times(w, rows, "g");

  ad::Var xin = x;
  if (conditioned && cond) xin = ad::replace_cols(x, 0, state_dim, ad::constant(*cond));

  std::vector<double> cin_v, cskip_v, cout_v;
  for (double tval : tv) {
    const SkipCoeffs sc = skip_coeffs(tval, sigma_data, schedule.eps);
    cin_v.push_back(c_in(tval, sigma_data));
    cskip_v.push_back(sc.c_skip);
    cout_v.push_back(sc.c_out);
  }
  ad::Var scaled = ad::rowscale(xin, ad::constant(Tensor::from_data({rows}, cin_v)));
  ad::Var input = ad::concat_cols(
      {scaled, ad::constant(time_embedding_rows(tv)), ad::constant(time_embedding_rows(wv))});
  eval_count->fetch_add(1, std::memory_order_relaxed);
  ad::Var f = backbone.forward(vars, input);
  return ad::add(ad::rowscale(xin, ad::constant(Tensor::from_data({rows}, cskip_v))),
                 ad::rowscale(f, ad::constant(Tensor::from_data({rows}, cout_v))));
}

Tensor StudentModel::forward(const Tensor& x, const std::vector<double>& t,
                             const std::vector<double>& w, const Tensor* cond) const {
  const auto tv = broadcast_times(t, x.rows(), "student_forward");
  const auto wv = broadcast_times(w, x.rows(), "student_forward");
  check_jump(tv, wv, schedule, "student_forward");

  Tensor xin = x;
  if (conditioned && cond) clamp_first_state(xin, *cond, state_dim);
  Tensor gout = g(xin, tv, wv, cond);
  Tensor out({x.rows(), flat_dim()});
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const double ratio = wv[static_cast<std::size_t>(r)] / tv[static_cast<std::size_t>(r)];
    for (std::int64_t c = 0; c < flat_dim(); ++c)
      out[r * flat_dim() + c] =
          ratio * xin[r * flat_dim() + c] + (1.0 - ratio) * gout[r * flat_dim() + c];
  }
  if (conditioned && cond) clamp_first_state(out, *cond, state_dim);
  return out;
}

ad::Var StudentModel::forward(const Mlp::Vars& vars, const ad::Var& x,
                              const std::vector<double>& t, const std::vector<double>& w,
                              const Tensor* cond) const {
  const std::int64_t rows = x.value().rows();
  const auto tv = broadcast_times(t, rows, "student_forward");
  const auto wv = broadcast_times(w, rows, "student_forward");
  check_jump(tv, wv, schedule, "student_forward");

  ad::Var xin = x;
  if (conditioned && cond) xin = ad::replace_cols(x, 0, state_dim, ad::constant(*cond));
  ad::Var gout = g(vars, xin, tv, wv, cond);
  std::vector<double> ratio(tv.size()), comp(tv.size());
  for (std::size_t r = 0; r < tv.size(); ++r) {
    ratio[r] = wv[r] / tv[r];
    comp[r] = 1.0 - ratio[r];
  }
  ad::Var out = ad::add(ad::rowscale(xin, ad::constant(Tensor::from_data({rows}, ratio))),
                        ad::rowscale(gout, ad::constant(Tensor::from_data({rows}, comp))));
  if (conditioned && cond) out = ad::replace_cols(out, 0, state_dim, ad::constant(*cond));
  return out;
}

Discriminator Discriminator::create(std::int64_t flat_dim,
                                    const std::vector<std::int64_t>& hidden, Rng& rng) {
  Discriminator d;
  d.net = Mlp::create({flat_dim, hidden, 1}, rng);
  return d;
}

Tensor Discriminator::prob(const Tensor& windows) const {
  Tensor logits = net.forward(windows);
  for (std::int64_t i = 0; i < logits.size(); ++i)
    logits[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return logits;
}

ad::Var Discriminator::prob(const Mlp::Vars& vars, const ad::Var& windows) const {
  return ad::sigmoid(net.forward(vars, windows));
}

Tensor compute_target(const TeacherModel& teacher, const StudentModel& target_model,
                      const Tensor& x_t, double t, double u, double w, const SolverSpec& spec,
                      const Tensor* cond) {
  if (!(w <= u && u < t)) throw ContractError("compute_target: require w <= u < t");
  Tensor sol = heun_solve(teacher, x_t, t, u, spec, cond);
  return target_model.forward(sol, {u}, {w}, cond);
}

DistillBatch sample_distill_batch(const StudentModel& student, const Tensor& windows,
                                  const std::vector<double>& grid_times, int batch_size, Rng& rng) {
  if (windows.rank() != 2 || windows.rows() == 0)
    throw ContractError("sample_distill_batch: empty window set");
  if (grid_times.size() < 2) throw ContractError("sample_distill_batch: grid too small");
  const std::int64_t flat = windows.cols();
  const auto n_grid = static_cast<std::int64_t>(grid_times.size());

  DistillBatch batch;
  batch.x0 = Tensor({batch_size, flat});
  for (int b = 0; b < batch_size; ++b) {
    const std::int64_t row = rng.uniform_int(windows.rows());
    for (std::int64_t c = 0; c < flat; ++c) batch.x0[b * flat + c] = windows[row * flat + c];
  }

  batch.t.resize(static_cast<std::size_t>(batch_size));
  batch.w.resize(static_cast<std::size_t>(batch_size));
  batch.u.resize(static_cast<std::size_t>(batch_size));
  std::vector<std::int64_t> ti(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    // t from grid indices {2..N} (1-indexed), w from grid times <= t
    // including the floor, u from grid times in [w, t).
    const std::int64_t it = 1 + rng.uniform_int(n_grid - 1);
    const std::int64_t iw = rng.uniform_int(it + 1);
    const std::int64_t iu = (iw == it) ? it : iw + rng.uniform_int(it - iw);
    batch.t[static_cast<std::size_t>(b)] = grid_times[static_cast<std::size_t>(it)];
    batch.w[static_cast<std::size_t>(b)] = grid_times[static_cast<std::size_t>(iw)];
    batch.u[static_cast<std::size_t>(b)] = grid_times[static_cast<std::size_t>(iu)];
  }

  batch.x_t = batch.x0;
  for (int b = 0; b < batch_size; ++b)
    for (std::int64_t c = 0; c < flat; ++c)
      batch.x_t[b * flat + c] += batch.t[static_cast<std::size_t>(b)] * rng.normal();

  if (student.conditioned) {
    batch.cond = Tensor({batch_size, student.state_dim});
    for (int b = 0; b < batch_size; ++b)
      for (std::int64_t j = 0; j < student.state_dim; ++j)
        batch.cond[b * student.state_dim + j] = batch.x0[b * flat + j];
    clamp_first_state(batch.x_t, batch.cond, student.state_dim);
  }
  return batch;
}

ad::Var ctm_loss(const StudentModel& student, const Mlp::Vars& student_vars,
                 const StudentModel& target_model, const TeacherModel& teacher,
                 const DistillBatch& batch, const SolverSpec& spec, ad::Var* x_est_out) {
  const Tensor* cond = student.conditioned ? &batch.cond : nullptr;
  const std::vector<double> eps_vec(batch.t.size(), student.schedule.eps);

  // x_est: student jump t->w (gradient), then frozen transport w->eps.
  Mlp::Vars target_vars = target_model.backbone.lift(false);
  ad::Var inner =
      student.forward(student_vars, ad::constant(batch.x_t), batch.t, batch.w, cond);
  ad::Var x_est = target_model.forward(target_vars, inner, batch.w, eps_vec, cond);
  if (x_est_out) *x_est_out = x_est;

  // x_target: teacher solver t->u, target jump u->w, transport w->eps; all
  // under no-gradient semantics.
  Tensor sol = heun_solve_rows(teacher, batch.x_t, batch.t, batch.u, spec, cond);
  Tensor tgt_w = target_model.forward(sol, batch.u, batch.w, cond);
  Tensor tgt0 = target_model.forward(tgt_w, batch.w, eps_vec, cond);

  return ad::mean_row_sumsq(ad::sub(ad::constant(tgt0), x_est));
}

ad::Var dsm_loss(const StudentModel& student, const Mlp::Vars& student_vars,
                 const DistillBatch& batch) {
  const Tensor* cond = student.conditioned ? &batch.cond : nullptr;
  ad::Var gout = student.g(student_vars, ad::constant(batch.x_t), batch.t, batch.t, cond);
  return ad::mean_row_sumsq(ad::sub(ad::constant(batch.x0), gout));
}

namespace {
constexpr double kLogClampFloor = 1e-7;
}

ad::Var gan_generator_term(const Discriminator& disc, const Mlp::Vars& frozen_disc_vars,
                           const ad::Var& x_est, std::int64_t* clamp_count) {
  ad::Var d_fake = disc.prob(frozen_disc_vars, x_est);
  ad::Var log_d = ad::log_clamped(d_fake, kLogClampFloor, clamp_count);
  const double inv_rows = -1.0 / static_cast<double>(x_est.value().rows());
  return ad::scale(ad::sum(log_d), inv_rows);
}

ad::Var gan_discriminator_objective(const Discriminator& disc, const Mlp::Vars& disc_vars,
                                    const Tensor& x0, const Tensor& x_est_detached,
                                    std::int64_t* clamp_count) {
  const double inv_real = 1.0 / static_cast<double>(x0.rows());
  const double inv_fake = 1.0 / static_cast<double>(x_est_detached.rows());
  ad::Var d_real = disc.prob(disc_vars, ad::constant(x0));
  ad::Var d_fake = disc.prob(disc_vars, ad::constant(x_est_detached));
  ad::Var one_minus = ad::sub(ad::constant(Tensor::full(d_fake.value().shape(), 1.0)), d_fake);
  ad::Var real_term = ad::scale(ad::sum(ad::log_clamped(d_real, kLogClampFloor, clamp_count)),
                                inv_real);
  ad::Var fake_term = ad::scale(ad::sum(ad::log_clamped(one_minus, kLogClampFloor, clamp_count)),
                                inv_fake);
  return ad::add(real_term, fake_term);
}

GanLossValues gan_losses(const StudentModel& student, const StudentModel& target_model,
                         const Discriminator& disc, const DistillBatch& batch) {
  const Tensor* cond = student.conditioned ? &batch.cond : nullptr;
  const std::vector<double> eps_vec(batch.t.size(), student.schedule.eps);
  Tensor inner = student.forward(batch.x_t, batch.t, batch.w, cond);
  Tensor x_est = target_model.forward(inner, batch.w, eps_vec, cond);

  GanLossValues out{0.0, 0.0, 0};
  Mlp::Vars dv = disc.net.lift(false);
  out.generator =
      gan_generator_term(disc, dv, ad::constant(x_est), &out.clamp_count).value()[0];
  out.discriminator =
      gan_discriminator_objective(disc, dv, batch.x0, x_est, &out.clamp_count).value()[0];
  return out;
}

double total_loss(double ctm, double dsm, double gan, double lambda_dsm, double lambda_gan) {
  if (lambda_dsm < 0.0 || lambda_gan < 0.0) throw ContractError("total_loss: negative lambda");
  return ctm + lambda_dsm * dsm + lambda_gan * gan;
}

DistillResult distill(const TeacherModel& teacher, const Tensor& windows,
                      const DistillConfig& config) {
  if (!(config.mu_ema >= 0.0 && config.mu_ema <= 1.0))
    throw ContractError("distill: mu_ema outside [0,1]");
  if (config.lambda_dsm < 0.0 || config.lambda_gan < 0.0)
    throw ContractError("distill: negative lambda");

  DistillResult result;
  result.student = StudentModel::from_teacher(teacher);
  result.target = StudentModel::from_teacher(teacher);
  const bool use_gan = config.lambda_gan > 0.0;

  Rng root(config.seed);
  Rng data_rng = root.derive(1);
  Rng disc_rng = root.derive(2);
  if (use_gan) {
    result.disc = Discriminator::create(result.student.flat_dim(), config.disc_hidden, disc_rng);
    result.has_disc = true;
  }

  NoiseSchedule sched = teacher.schedule;
  const std::vector<double> grid = karras_times(sched);

  Adam student_opt({.lr = config.lr}, result.student.backbone.named_params());
  std::unique_ptr<Adam> disc_opt;
  if (use_gan)
    disc_opt = std::make_unique<Adam>(AdamConfig{.lr = config.lr * config.disc_lr_scale},
                                      result.disc.net.named_params());

  std::ofstream trace;
  if (!config.trace_path.empty()) {
    trace.open(config.trace_path, std::ios::trunc);
    trace << "schema,step,loss_ctm,loss_dsm,loss_gan,total,wallclock_ms\n";
  }
  const auto t_start = std::chrono::steady_clock::now();

  for (int step = 0; step < config.steps; ++step) {
    DistillBatch batch = sample_distill_batch(result.student, windows, grid, config.batch_size,
                                              data_rng);

    Mlp::Vars svars = result.student.backbone.lift(true);
    ad::Var x_est;
    ad::Var l_ctm = ctm_loss(result.student, svars, result.target, teacher, batch, config.solver,
                             &x_est);
    ad::Var l_dsm = dsm_loss(result.student, svars, batch);
    ad::Var total = ad::add(l_ctm, ad::scale(l_dsm, config.lambda_dsm));
    std::int64_t clamp_count = 0;
    double gan_gen_value = 0.0;
    if (use_gan) {
      Mlp::Vars frozen_dv = result.disc.net.lift(false);
      ad::Var l_gen = gan_generator_term(result.disc, frozen_dv, x_est, &clamp_count);
      gan_gen_value = l_gen.value()[0];
      total = ad::add(total, ad::scale(l_gen, config.lambda_gan));
    }

    const double total_value = total.value()[0];
    if (!std::isfinite(total_value))
      throw DivergenceError("distill: non-finite loss at step " + std::to_string(step));

    ad::backward(total);
    std::vector<Tensor> grads;
    for (std::size_t l = 0; l < svars.w.size(); ++l) {
      grads.push_back(svars.w[l].grad());
      grads.push_back(svars.b[l].grad());
    }
    student_opt.step(grads);

    if (use_gan) {
      Mlp::Vars dvars = result.disc.net.lift(true);
      ad::Var obj = gan_discriminator_objective(result.disc, dvars, batch.x0,
                                                x_est.value(), &clamp_count);
      // Ascend the objective.
      ad::backward(ad::scale(obj, -1.0));
      std::vector<Tensor> dgrads;
      for (std::size_t l = 0; l < dvars.w.size(); ++l) {
        dgrads.push_back(dvars.w[l].grad());
        dgrads.push_back(dvars.b[l].grad());
      }
      disc_opt->step(dgrads);
    }

    ema_update(result.target.backbone.named_params(),
               const_cast<const Mlp&>(result.student.backbone).named_params(), config.mu_ema);

    if (trace.is_open() && (step % config.log_every == 0 || step + 1 == config.steps)) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      trace << 1 << ',' << step << ',' << l_ctm.value()[0] << ',' << l_dsm.value()[0] << ','
            << gan_gen_value << ',' << total_value << ',' << ms << '\n';
      result.loss_trace.push_back(total_value);
    }
  }
  return result;
}

Checkpoint StudentModel::to_checkpoint() const {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "student";
  meta["horizon"] = horizon;
  meta["state_dim"] = state_dim;
  meta["sigma_data"] = sigma_data;
  meta["conditioned"] = conditioned;
  meta["eps"] = schedule.eps;
  meta["t_max"] = schedule.t_max;
  meta["rho"] = schedule.rho;
  meta["n_train"] = schedule.n_train;
  meta["layers"] = backbone.layer_sizes();
  ckpt.meta_json = meta.dump();
  for (const auto& [name, t] : backbone.named_params("backbone.")) ckpt.add(name, *t);
  return ckpt;
}

StudentModel StudentModel::from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "student")
    throw MissingArtifactError("checkpoint is not a student model");
  StudentModel m;
  m.horizon = meta.at("horizon").get<std::int64_t>();
  m.state_dim = meta.at("state_dim").get<std::int64_t>();
  m.sigma_data = meta.at("sigma_data").get<double>();
  m.conditioned = meta.at("conditioned").get<bool>();
  m.schedule.eps = meta.at("eps").get<double>();
  m.schedule.t_max = meta.at("t_max").get<double>();
  m.schedule.rho = meta.at("rho").get<double>();
  m.schedule.n_train = meta.at("n_train").get<int>();
  const auto layers = meta.at("layers").get<std::vector<std::int64_t>>();
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    ws.push_back(ckpt.get("backbone.l" + std::to_string(l) + ".w"));
    bs.push_back(ckpt.get("backbone.l" + std::to_string(l) + ".b"));
  }
  m.backbone = Mlp::from_layers(std::move(ws), std::move(bs));
  return m;
}

Checkpoint Discriminator::to_checkpoint() const {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "discriminator";
  meta["layers"] = net.layer_sizes();
  ckpt.meta_json = meta.dump();
  for (const auto& [name, t] : net.named_params("net.")) ckpt.add(name, *t);
  return ckpt;
}

Discriminator Discriminator::from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "discriminator")
    throw MissingArtifactError("checkpoint is not a discriminator");
  const auto layers = meta.at("layers").get<std::vector<std::int64_t>>();
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    ws.push_back(ckpt.get("net.l" + std::to_string(l) + ".w"));
    bs.push_back(ckpt.get("net.l" + std::to_string(l) + ".b"));
  }
  Discriminator d;
  d.net = Mlp::from_layers(std::move(ws), std::move(bs));
  return d;
}

}  // namespace ctp
