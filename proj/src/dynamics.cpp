#include "ctp/dynamics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctp/autodiff.hpp"
#include "ctp/errors.hpp"
#include "ctp/optim.hpp"

namespace ctp {

std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("compute_returns: need 0 <= gamma < 1");
  std::vector<double> returns(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    returns[i] = acc;
    ensure_finite(acc, "compute_returns");
  }
  return returns;
}

InverseDynamics InverseDynamics::create(std::int64_t d_s, std::int64_t d_a, int stride,
                                        const std::vector<std::int64_t>& hidden,
                                        const Normalizer& norm, Rng& rng) {
  InverseDynamics m;
  m.state_dim = d_s;
  m.action_dim = d_a;
  m.stride = stride;
  m.norm = norm;
  m.net = Mlp::create({2 * d_s, hidden, d_a}, rng);
  return m;
}

Tensor InverseDynamics::predict(const Tensor& inputs) const { return net.forward(inputs); }

Tensor InverseDynamics::extract_action_normalized(const Tensor& s_norm,
                                                  const Tensor& s_next_norm) const {
  if (s_norm.size() != state_dim || s_next_norm.size() != state_dim)
    throw DimensionError("extract_action: state dimension mismatch");
  Tensor in({1, 2 * state_dim});
  for (std::int64_t c = 0; c < state_dim; ++c) {
    in[c] = s_norm[c];
    in[state_dim + c] = s_next_norm[c];
  }
  Tensor a_norm = net.forward(in);
  return norm.denormalize_actions(a_norm).reshaped({action_dim});
}

Tensor InverseDynamics::extract_action(const Tensor& s, const Tensor& s_next) const {
  Tensor sn = norm.normalize_states(s.reshaped({1, state_dim}));
  Tensor sn2 = norm.normalize_states(s_next.reshaped({1, state_dim}));
  return extract_action_normalized(sn.reshaped({state_dim}), sn2.reshaped({state_dim}));
}

Critic Critic::create(std::int64_t horizon, std::int64_t d_s, double gamma,
                      const std::vector<std::int64_t>& hidden, Rng& rng) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("Critic::create: need 0 <= gamma < 1");
  Critic c;
  c.horizon = horizon;
  c.state_dim = d_s;
  c.gamma = gamma;
  c.net = Mlp::create({horizon * d_s, hidden, 1}, rng);
  return c;
}

std::vector<double> Critic::values(const Tensor& windows) const {
  Tensor out = net.forward(windows);
  std::vector<double> v(static_cast<std::size_t>(out.rows()));
  for (std::int64_t r = 0; r < out.rows(); ++r) v[static_cast<std::size_t>(r)] = out[r];
  return v;
}

namespace {

double holdout_mse(const Mlp& net, const Tensor& x, const Tensor& y) {
  if (x.rows() == 0) return 0.0;
  Tensor out = net.forward(x);
  double s = 0.0;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - y[i];
    s += d * d;
  }
  return s / static_cast<double>(out.rows());
}

}  // namespace

RegressionReport train_regression(Mlp& net, const Tensor& x, const Tensor& y,
                                  const Tensor& x_holdout, const Tensor& y_holdout,
                                  const RegressionConfig& cfg) {
  if (x.rows() == 0) throw ContractError("train_regression: empty training set");
  if (x.rows() != y.rows()) throw DimensionError("train_regression: x/y row mismatch");

  RegressionReport report;
  report.initial_holdout_mse = holdout_mse(net, x_holdout, y_holdout);

  Rng rng(cfg.seed);
  Adam opt({.lr = cfg.lr}, net.named_params());
  std::ofstream trace;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path, std::ios::trunc);
    trace << "schema,step,loss,wallclock_ms\n";
  }
  const auto t_start = std::chrono::steady_clock::now();

  const std::int64_t in_dim = x.cols(), out_dim = y.cols();
  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.final_lr_fraction != 1.0 && cfg.steps > 1) {
      const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
      opt.set_lr(cfg.lr * (1.0 - frac * (1.0 - cfg.final_lr_fraction)));
    }
    Tensor bx({cfg.batch_size, in_dim}), by({cfg.batch_size, out_dim});
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::int64_t r = rng.uniform_int(x.rows());
      for (std::int64_t c = 0; c < in_dim; ++c) bx[b * in_dim + c] = x[r * in_dim + c];
      for (std::int64_t c = 0; c < out_dim; ++c) by[b * out_dim + c] = y[r * out_dim + c];
    }
    Mlp::Vars vars = net.lift(true);
    ad::Var loss = ad::mean_row_sumsq(ad::sub(net.forward(vars, ad::constant(bx)),
                                              ad::constant(by)));
    const double value = loss.value()[0];
    if (!std::isfinite(value))
      throw DivergenceError("train_regression: non-finite loss at step " + std::to_string(step));
    ad::backward(loss);
    std::vector<Tensor> grads;
    for (std::size_t l = 0; l < vars.w.size(); ++l) {
      grads.push_back(vars.w[l].grad());
      grads.push_back(vars.b[l].grad());
    }
    opt.step(grads);
    report.final_train_loss = value;
    if (trace.is_open() && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      trace << 1 << ',' << step << ',' << value << ',' << ms << '\n';
    }
  }
  report.final_holdout_mse = holdout_mse(net, x_holdout, y_holdout);
  return report;
}

double invdyn_loss(const InverseDynamics& model, const TransitionSet& batch) {
  if (batch.inputs.rows() == 0) throw ContractError("invdyn_loss: empty batch");
  Tensor pred = model.net.forward(batch.inputs);
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - batch.targets[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.rows());
}

InverseDynamics train_invdyn(const Dataset& ds, const std::vector<std::int64_t>& hidden,
                             const RegressionConfig& cfg, RegressionReport* report) {
  TransitionSet train = make_transitions(ds, ds.meta.stride, Split::Train);
  TransitionSet holdout = make_transitions(ds, ds.meta.stride, Split::Holdout);
  Rng rng(splitmix64(cfg.seed ^ 0x1D5EULL));
  InverseDynamics model =
      InverseDynamics::create(ds.meta.d_s, ds.meta.d_a, ds.meta.stride, hidden, ds.norm, rng);
  RegressionReport rep = train_regression(model.net, train.inputs, train.targets, holdout.inputs,
                                          holdout.targets, cfg);
  if (report) *report = rep;
  return model;
}

Critic train_critic(const Dataset& ds, double gamma, const std::vector<std::int64_t>& hidden,
                    const RegressionConfig& cfg, RegressionReport* report) {
  WindowSet train = make_windows(ds, ds.meta.horizon, ds.meta.stride, Split::Train);
  WindowSet holdout;
  bool has_holdout = true;
  try {
    holdout = make_windows(ds, ds.meta.horizon, ds.meta.stride, Split::Holdout);
  } catch (const ContractError&) {
    has_holdout = false;
  }
  auto to_column = [](const std::vector<double>& v) {
    Tensor t({static_cast<std::int64_t>(v.size()), 1});
    for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = v[i];
    return t;
  };
  Rng rng(splitmix64(cfg.seed ^ 0xC817ULL));
  Critic critic = Critic::create(ds.meta.horizon, ds.meta.d_s, gamma, hidden, rng);
  Tensor hx = has_holdout ? holdout.windows : Tensor({0, train.windows.cols()});
  Tensor hy = has_holdout ? to_column(holdout.returns) : Tensor({0, 1});
  RegressionReport rep =
      train_regression(critic.net, train.windows, to_column(train.returns), hx, hy, cfg);
  if (report) *report = rep;
  return critic;
}

Checkpoint InverseDynamics::to_checkpoint() const {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "invdyn";
  meta["state_dim"] = state_dim;
  meta["action_dim"] = action_dim;
  meta["stride"] = stride;
  meta["layers"] = net.layer_sizes();
  ckpt.meta_json = meta.dump();
  for (const auto& [name, t] : net.named_params("net.")) ckpt.add(name, *t);
  ckpt.add("norm.s_min", norm.s_min);
  ckpt.add("norm.s_max", norm.s_max);
  ckpt.add("norm.a_min", norm.a_min);
  ckpt.add("norm.a_max", norm.a_max);
  return ckpt;
}

InverseDynamics InverseDynamics::from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "invdyn")
    throw MissingArtifactError("checkpoint is not an inverse-dynamics model");
  InverseDynamics m;
  m.state_dim = meta.at("state_dim").get<std::int64_t>();
  m.action_dim = meta.at("action_dim").get<std::int64_t>();
  m.stride = meta.at("stride").get<int>();
  const auto layers = meta.at("layers").get<std::vector<std::int64_t>>();
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    ws.push_back(ckpt.get("net.l" + std::to_string(l) + ".w"));
    bs.push_back(ckpt.get("net.l" + std::to_string(l) + ".b"));
  }
  m.net = Mlp::from_layers(std::move(ws), std::move(bs));
  m.norm.s_min = ckpt.get("norm.s_min");
  m.norm.s_max = ckpt.get("norm.s_max");
  m.norm.a_min = ckpt.get("norm.a_min");
  m.norm.a_max = ckpt.get("norm.a_max");
  return m;
}

Checkpoint Critic::to_checkpoint() const {
  Checkpoint ckpt;
  nlohmann::json meta;
  meta["kind"] = "critic";
  meta["horizon"] = horizon;
  meta["state_dim"] = state_dim;
  meta["gamma"] = gamma;
  meta["layers"] = net.layer_sizes();
  ckpt.meta_json = meta.dump();
  for (const auto& [name, t] : net.named_params("net.")) ckpt.add(name, *t);
  return ckpt;
}

Critic Critic::from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = nlohmann::json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "critic")
    throw MissingArtifactError("checkpoint is not a critic");
  Critic c;
  c.horizon = meta.at("horizon").get<std::int64_t>();
  c.state_dim = meta.at("state_dim").get<std::int64_t>();
  c.gamma = meta.at("gamma").get<double>();
  const auto layers = meta.at("layers").get<std::vector<std::int64_t>>();
  std::vector<Tensor> ws, bs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    ws.push_back(ckpt.get("net.l" + std::to_string(l) + ".w"));
    bs.push_back(ckpt.get("net.l" + std::to_string(l) + ".b"));
  }
  c.net = Mlp::from_layers(std::move(ws), std::move(bs));
  return c;
}

}  // namespace ctp
