#include "ctp/teacher.hpp"
#include <chrono>
#include <fstream>

#include <cmath>

#include <nlohmann/json.hpp>

#include "ctp/conditioning.hpp"
#include "ctp/optim.hpp"
#include "ctp/errors.hpp"

namespace ctp {

namespace {

// EDM-style input scaling keeps network inputs O(1) across noise levels.
double c_in(double t, double sigma_data) {
  return 1.0 / std::sqrt(t * t + sigma_data * sigma_data);
}

std::vector<double> broadcast_times(const std::vector<double>& t, std::int64_t rows,
                                    const char* who) {
  if (t.size() == static_cast<std::size_t>(rows)) return t;
  if (t.size() == 1) return std::vector<double>(static_cast<std::size_t>(rows), t[0]);
  throw DimensionError(std::string(who) + ": times must have 1 or batch-size entries");
}

void check_times(const std::vector<double>& t, const NoiseSchedule& s, const char* who) {
  for (double v : t)
    if (!(v >= s.eps && v <= s.t_max))
      throw ContractError(std::string(who) + ": time outside [eps, t_max]");
}

}  // namespace

TeacherModel TeacherModel::create(std::int64_t horizon, std::int64_t state_dim,
                                  const std::vector<std::int64_t>& hidden,
                                  const NoiseSchedule& sched, double sigma_data, bool conditioned,
                                  Rng& rng) {
  TeacherModel m;
  m.horizon = horizon;
  m.state_dim = state_dim;
  m.schedule = sched;
  m.sigma_data = sigma_data;
  m.conditioned = conditioned;
  m.backbone = Mlp::create({horizon * state_dim + kTimeEmbedDim, hidden, horizon * state_dim}, rng);
  return m;
}

Tensor TeacherModel::denoise(const Tensor& x, const std::vector<double>& t,
                             const Tensor* cond) const {
  if (x.rank() != 2 || x.cols() != flat_dim())
    throw DimensionError("denoise: input " + x.shape_str());
  ensure_finite(x, "denoise input");
  const auto times = broadcast_times(t, x.rows(), "denoise");
  check_times(times, schedule, "denoise");

  Tensor xin = x;
  if (conditioned && cond) clamp_first_state(xin, *cond, state_dim);

  Tensor scaled = xin;
  for (std::int64_t r = 0; r < scaled.rows(); ++r) {
    const double ci = c_in(times[static_cast<std::size_t>(r)], sigma_data);
    for (std::int64_t c = 0; c < scaled.cols(); ++c) scaled[r * scaled.cols() + c] *= ci;
  }
  Tensor emb = time_embedding_rows(times);
  Tensor input({x.rows(), flat_dim() + kTimeEmbedDim});
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    for (std::int64_t c = 0; c < flat_dim(); ++c)
      input[r * input.cols() + c] = scaled[r * flat_dim() + c];
    for (std::int64_t c = 0; c < kTimeEmbedDim; ++c)
      input[r * input.cols() + flat_dim() + c] = emb[r * kTimeEmbedDim + c];
  }
  eval_count->fetch_add(1, std::memory_order_relaxed);
  Tensor f = backbone.forward(input);

  Tensor out({x.rows(), flat_dim()});
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const SkipCoeffs sc = skip_coeffs(times[static_cast<std::size_t>(r)], sigma_data, schedule.eps);
    for (std::int64_t c = 0; c < flat_dim(); ++c)
      out[r * flat_dim() + c] = sc.c_skip * xin[r * flat_dim() + c] + sc.c_out * f[r * flat_dim() + c];
  }
  if (conditioned && cond) clamp_first_state(out, *cond, state_dim);
  ensure_finite(out, "denoise output");
  return out;
}

ad::Var TeacherModel::denoise(const Mlp::Vars& vars, const Tensor& x,
                              const std::vector<double>& t, const Tensor* cond) const {
  const auto times = broadcast_times(t, x.rows(), "denoise");
  check_times(times, schedule, "denoise");

  Tensor xin = x;
  if (conditioned && cond) clamp_first_state(xin, *cond, state_dim);

  std::vector<double> cin_v, cskip_v, cout_v;
  for (double tv : times) {
    const SkipCoeffs sc = skip_coeffs(tv, sigma_data, schedule.eps);
    cin_v.push_back(c_in(tv, sigma_data));
    cskip_v.push_back(sc.c_skip);
    cout_v.push_back(sc.c_out);
  }
  const auto rows = static_cast<std::int64_t>(times.size());
  ad::Var xin_c = ad::constant(xin);
  ad::Var scaled = ad::rowscale(xin_c, ad::constant(Tensor::from_data({rows}, cin_v)));
  ad::Var input = ad::concat_cols({scaled, ad::constant(time_embedding_rows(times))});
  eval_count->fetch_add(1, std::memory_order_relaxed);
  ad::Var f = backbone.forward(vars, input);
  ad::Var out = ad::add(ad::rowscale(xin_c, ad::constant(Tensor::from_data({rows}, cskip_v))),
                        ad::rowscale(f, ad::constant(Tensor::from_data({rows}, cout_v))));
  return out;
}

Tensor heun_integrate(const DenoiseFn& denoiser, double eps_floor, const Tensor& x,
                      const std::vector<double>& t, const std::vector<double>& u, int substeps) {
  if (substeps < 1) throw ContractError("heun_integrate: substeps must be >= 1");
  const auto tv = broadcast_times(t, x.rows(), "heun_integrate");
  const auto uv = broadcast_times(u, x.rows(), "heun_integrate");
  const auto rows = static_cast<std::size_t>(x.rows());
  for (std::size_t r = 0; r < rows; ++r)
    if (uv[r] > tv[r]) throw ContractError("heun_integrate: require u <= t per row");

  const std::int64_t cols = x.cols();
  Tensor cur = x;
  std::vector<double> ta(rows), tb(rows);
  for (int s = 0; s < substeps; ++s) {
    const double fa = static_cast<double>(s) / substeps;
    const double fb = static_cast<double>(s + 1) / substeps;
    bool any_move = false;
    for (std::size_t r = 0; r < rows; ++r) {
      ta[r] = tv[r] + (uv[r] - tv[r]) * fa;
      tb[r] = tv[r] + (uv[r] - tv[r]) * fb;
      if (ta[r] != tb[r]) any_move = true;
    }
    if (!any_move) continue;  // all rows have empty intervals

    Tensor d_a = denoiser(cur, ta);
    Tensor pred = cur;
    for (std::size_t r = 0; r < rows; ++r) {
      const double h = tb[r] - ta[r];
      if (h == 0.0) continue;
      for (std::int64_t c = 0; c < cols; ++c) {
        const auto i = static_cast<std::int64_t>(r) * cols + c;
        pred[i] = cur[i] + h * (cur[i] - d_a[i]) / ta[r];
      }
    }
    // A corrector endpoint below the time floor would divide by an
    // unmodeled time; that substep stays with the Euler predictor.
    bool below_floor = false;
    for (std::size_t r = 0; r < rows; ++r)
      if (tb[r] < eps_floor) below_floor = true;
    if (below_floor) {
      cur = std::move(pred);
    } else {
      Tensor d_b = denoiser(pred, tb);
      for (std::size_t r = 0; r < rows; ++r) {
        const double h = tb[r] - ta[r];
        if (h == 0.0) continue;
        for (std::int64_t c = 0; c < cols; ++c) {
          const auto i = static_cast<std::int64_t>(r) * cols + c;
          const double slope_a = (cur[i] - d_a[i]) / ta[r];
          const double slope_b = (pred[i] - d_b[i]) / tb[r];
          cur[i] = cur[i] + h * 0.5 * (slope_a + slope_b);
        }
      }
    }
    ensure_finite(cur, "heun_integrate state");
  }
  return cur;
}

Tensor heun_solve_rows(const TeacherModel& model, const Tensor& x, const std::vector<double>& t,
                       const std::vector<double>& u, const SolverSpec& spec, const Tensor* cond) {
  const auto tv = broadcast_times(t, x.rows(), "heun_solve");
  const auto uv = broadcast_times(u, x.rows(), "heun_solve");
  for (std::size_t r = 0; r < tv.size(); ++r) {
    if (uv[r] < model.schedule.eps || tv[r] > model.schedule.t_max)
      throw ContractError("heun_solve: interval outside [eps, t_max]");
  }
  Tensor start = x;
  if (model.conditioned && cond) clamp_first_state(start, *cond, model.state_dim);
  DenoiseFn fn = [&model, cond](const Tensor& xi, const std::vector<double>& ti) {
    return model.denoise(xi, ti, cond);
  };
  return heun_integrate(fn, model.schedule.eps, start, tv, uv, spec.substeps);
}

Tensor heun_solve(const TeacherModel& model, const Tensor& x, double t, double u,
                  const SolverSpec& spec, const Tensor* cond) {
  if (!(u < t)) throw ContractError("heun_solve: require u < t");
  return heun_solve_rows(model, x, {t}, {u}, spec, cond);
}

ad::Var teacher_loss(const TeacherModel& model, const Mlp::Vars& vars, const Tensor& clean,
                     const TrainNoiseDist& dist, Rng& rng) {
  if (clean.rank() != 2 || clean.rows() == 0) throw ContractError("teacher_loss: empty batch");
  const std::int64_t rows = clean.rows(), cols = clean.cols();
  std::vector<double> sigma(static_cast<std::size_t>(rows));
  for (auto& s : sigma) s = sample_sigma(dist, model.schedule, rng);

  Tensor noisy = clean;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      noisy[r * cols + c] += sigma[static_cast<std::size_t>(r)] * rng.normal();

  Tensor cond;
  const Tensor* cond_ptr = nullptr;
  if (model.conditioned) {
    cond = Tensor({rows, model.state_dim});
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < model.state_dim; ++j)
        cond[r * model.state_dim + j] = clean[r * cols + j];
    cond_ptr = &cond;
  }

  ad::Var denoised = model.denoise(vars, noisy, sigma, cond_ptr);
  ad::Var diff = ad::sub(denoised, ad::constant(clean));
  if (model.conditioned)
    diff = ad::mul_rowvec(diff, ad::constant(first_state_mask(cols, model.state_dim)));
  return ad::mean_row_sumsq(diff);
}

double teacher_loss_value(const TeacherModel& model, const Tensor& clean,
                          const TrainNoiseDist& dist, Rng& rng) {
  Mlp::Vars vars = model.backbone.lift(false);
  return teacher_loss(model, vars, clean, dist, rng).value()[0];
}

TeacherModel train_teacher(const Tensor& train_windows, const Tensor& holdout_windows,
                           std::int64_t horizon, std::int64_t state_dim,
                           const TeacherTrainConfig& cfg, TeacherTrainReport* report) {
  if (train_windows.rank() != 2 || train_windows.rows() == 0)
    throw ContractError("train_teacher: empty window set");
  if (train_windows.cols() != horizon * state_dim)
    throw DimensionError("train_teacher: window width does not match horizon*state_dim");

  Rng root(cfg.seed);
  Rng init_rng = root.derive(1);
  Rng data_rng = root.derive(2);
  TeacherModel model = TeacherModel::create(horizon, state_dim, cfg.hidden, cfg.schedule,
                                            cfg.sigma_data, cfg.conditioned, init_rng);

  auto holdout_loss = [&]() {
    if (holdout_windows.rows() == 0) return 0.0;
    Rng eval_rng = root.derive(3);  // same corruption before and after
    return teacher_loss_value(model, holdout_windows, cfg.noise_dist, eval_rng);
  };
  TeacherTrainReport rep;
  rep.initial_holdout_loss = holdout_loss();

  Adam opt({.lr = cfg.lr}, model.backbone.named_params());
  std::ofstream trace;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path, std::ios::trunc);
    trace << "schema,step,loss,wallclock_ms\n";
  }
  const auto t_start = std::chrono::steady_clock::now();

  const std::int64_t flat = train_windows.cols();
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor batch({cfg.batch_size, flat});
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::int64_t r = data_rng.uniform_int(train_windows.rows());
      for (std::int64_t c = 0; c < flat; ++c) batch[b * flat + c] = train_windows[r * flat + c];
    }
    Mlp::Vars vars = model.backbone.lift(true);
    ad::Var loss = teacher_loss(model, vars, batch, cfg.noise_dist, data_rng);
    const double value = loss.value()[0];
    if (!std::isfinite(value))
      throw DivergenceError("train_teacher: non-finite loss at step " + std::to_string(step));
    ad::backward(loss);
    std::vector<Tensor> grads;
    for (std::size_t l = 0; l < vars.w.size(); ++l) {
      grads.push_back(vars.w[l].grad());
      grads.push_back(vars.b[l].grad());
    }
    opt.step(grads);
    rep.final_train_loss = value;
    if (trace.is_open() && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      trace << 1 << ',' << step << ',' << value << ',' << ms << '\n';
    }
  }
  rep.final_holdout_loss = holdout_loss();
  if (report) *report = rep;
  return model;
}

Checkpoint TeacherModel::to_checkpoint() const {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "teacher";
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
  for (const auto& [name, t] : backbone.named_params("backbone."))
    ckpt.add(name, *t);
  return ckpt;
}

TeacherModel TeacherModel::from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "teacher")
    throw MissingArtifactError("checkpoint is not a teacher model");
  TeacherModel m;
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

}  // namespace ctp
