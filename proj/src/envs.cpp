#include "ctp/envs.hpp"

#include <algorithm>
#include <cmath>

#include "ctp/errors.hpp"

namespace ctp {

EnvSpec EnvSpec::double_integrator() {
  EnvSpec s;
  s.kind = EnvKind::DoubleIntegrator;
  s.id = "integrator";
  s.d_s = 2;
  s.d_a = 1;
  s.dt = 0.1;
  s.max_steps = 80;
  return s;
}

EnvSpec EnvSpec::point_maze() {
  EnvSpec s;
  s.kind = EnvKind::PointMaze;
  s.id = "maze";
  s.d_s = 4;
  s.d_a = 2;
  s.dt = 0.1;
  s.max_steps = 160;
  s.act_limit = 2.0;
  s.vel_limit = 1.5;
  // One horizontal bar attached to the left wall makes a U-shaped detour.
  s.walls = {{0.0, 1.7, 2.8, 2.3}};
  return s;
}

EnvSpec EnvSpec::by_id(const std::string& id) {
  if (id == "integrator") return double_integrator();
  if (id == "maze") return point_maze();
  throw ContractError("unknown env id: " + id);
}

namespace {

constexpr double kMazeLo = 0.0;
constexpr double kMazeHi = 4.0;

bool blocked(const EnvSpec& spec, double x, double y) {
  if (x < kMazeLo || x > kMazeHi || y < kMazeLo || y > kMazeHi) return true;
  for (const auto& w : spec.walls)
    if (w.contains(x, y)) return true;
  return false;
}

double clip(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

}  // namespace

StepResult env_step(const EnvSpec& spec, const Tensor& s, const Tensor& a) {
  if (s.size() != spec.d_s || a.size() != spec.d_a)
    throw DimensionError("env_step: state/action dimension mismatch");
  StepResult out;
  if (spec.kind == EnvKind::DoubleIntegrator) {
    const double p = s[0], v = s[1];
    const double act = clip(a[0], -spec.act_limit, spec.act_limit);
    // Position saturates at the track ends; velocity stays v + a*dt so the
    // transition remains linear in (v, a) everywhere.
    const double np = clip(p + v * spec.dt, -spec.pos_limit, spec.pos_limit);
    const double nv = clip(v + act * spec.dt, -spec.vel_limit, spec.vel_limit);
    out.next = Tensor::from_data({2}, {np, nv});
    out.reward = -std::fabs(np - spec.goal_p);
    out.done = false;
  } else {
    const double x = s[0], y = s[1], vx = s[2], vy = s[3];
    const double ax = clip(a[0], -spec.act_limit, spec.act_limit);
    const double ay = clip(a[1], -spec.act_limit, spec.act_limit);
    double nx = x + vx * spec.dt;
    double ny = y;
    double nvx = vx + ax * spec.dt;
    double nvy = vy + ay * spec.dt;
    if (blocked(spec, nx, ny)) {
      nx = x;
      nvx = 0.0;
    }
    ny = y + vy * spec.dt;
    if (blocked(spec, nx, ny)) {
      ny = y;
      nvy = 0.0;
    }
    nvx = clip(nvx, -spec.vel_limit, spec.vel_limit);
    nvy = clip(nvy, -spec.vel_limit, spec.vel_limit);
    out.next = Tensor::from_data({4}, {nx, ny, nvx, nvy});
    const double dist = std::hypot(nx - spec.goal_x, ny - spec.goal_y);
    if (dist <= spec.goal_radius) {
      out.reward = 1.0;
      out.done = true;
    }
  }
  return out;
}

Tensor env_reset(const EnvSpec& spec, Rng& rng) {
  if (spec.kind == EnvKind::DoubleIntegrator) {
    return Tensor::from_data({2}, {rng.uniform(-spec.pos_limit, spec.pos_limit), 0.0});
  }
  // Spawn below the wall, away from it.
  const double x = rng.uniform(0.3, 3.7);
  const double y = rng.uniform(0.3, 1.3);
  return Tensor::from_data({4}, {x, y, 0.0, 0.0});
}

PolicyKind policy_kind_from(const std::string& name) {
  if (name == "random") return PolicyKind::Random;
  if (name == "expert") return PolicyKind::Expert;
  if (name == "mixture") return PolicyKind::Mixture;
  throw ContractError("unknown policy kind: " + name);
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Random: return "random";
    case PolicyKind::Expert: return "expert";
    case PolicyKind::Mixture: return "mixture";
  }
  return "?";
}

ScriptedPolicy::ScriptedPolicy(const EnvSpec& spec, PolicyKind kind, Rng rng, double noise_scale)
    : spec_(spec), kind_(kind), rng_(rng), noise_scale_(noise_scale) {
  if (kind == PolicyKind::Mixture)
    throw ContractError("ScriptedPolicy: mixture is resolved per episode, not per policy");
}

void ScriptedPolicy::reset() { waypoint_ = 0; }

Tensor ScriptedPolicy::act(const Tensor& s) {
  if (kind_ == PolicyKind::Random) {
    Tensor a({spec_.d_a});
    for (std::int64_t i = 0; i < spec_.d_a; ++i)
      a[i] = rng_.uniform(-spec_.act_limit, spec_.act_limit);
    return a;
  }
  if (spec_.kind == EnvKind::DoubleIntegrator) {
    const double kp = 1.2, kd = 1.8;
    const double a = kp * (spec_.goal_p - s[0]) - kd * s[1] + noise_scale_ * rng_.normal();
    return Tensor::from_data({1}, {clip(a, -spec_.act_limit, spec_.act_limit)});
  }
  // Fixed route around the bar, ending on the goal.
  static const double route[3][2] = {{3.4, 0.9}, {3.4, 3.2}, {0.6, 3.4}};
  const double gx = route[std::min<std::size_t>(waypoint_, 2)][0];
  const double gy = route[std::min<std::size_t>(waypoint_, 2)][1];
  if (std::hypot(s[0] - gx, s[1] - gy) < 0.35 && waypoint_ < 2) ++waypoint_;
  const double kp = 3.0, kd = 2.6;
  Tensor a({2});
  a[0] = clip(kp * (gx - s[0]) - kd * s[2] + noise_scale_ * rng_.normal(), -spec_.act_limit,
              spec_.act_limit);
  a[1] = clip(kp * (gy - s[1]) - kd * s[3] + noise_scale_ * rng_.normal(), -spec_.act_limit,
              spec_.act_limit);
  return a;
}

Trajectory roll_episode(const EnvSpec& spec, PolicyKind policy, double expert_noise, Rng rng) {
  ScriptedPolicy pi(spec, policy, rng.derive(1), expert_noise);
  Rng reset_rng = rng.derive(2);
  Tensor s = env_reset(spec, reset_rng);

  std::vector<double> states, actions, rewards;
  bool terminal = false;
  for (int step = 0; step < spec.max_steps; ++step) {
    Tensor a = pi.act(s);
    StepResult res = env_step(spec, s, a);
    for (std::int64_t i = 0; i < spec.d_s; ++i) states.push_back(s[i]);
    for (std::int64_t i = 0; i < spec.d_a; ++i) actions.push_back(a[i]);
    rewards.push_back(res.reward);
    s = res.next;
    if (res.done) {
      terminal = true;
      break;
    }
  }
  Trajectory tr;
  const auto T = static_cast<std::int64_t>(rewards.size());
  tr.states = Tensor::from_data({T, spec.d_s}, std::move(states));
  tr.actions = Tensor::from_data({T, spec.d_a}, std::move(actions));
  tr.rewards = std::move(rewards);
  tr.terminal = terminal;
  return tr;
}

Dataset collect_dataset(const EnvSpec& spec, const CollectConfig& cfg) {
  Dataset ds;
  ds.meta.env_id = spec.id;
  ds.meta.d_s = spec.d_s;
  ds.meta.d_a = spec.d_a;
  ds.meta.stride = cfg.stride;
  ds.meta.horizon = cfg.horizon;
  ds.meta.gamma = cfg.gamma;

  Rng root(cfg.seed);
  for (int e = 0; e < cfg.n_episodes; ++e) {
    PolicyKind kind = cfg.policy;
    if (kind == PolicyKind::Mixture) {
      // Deterministic interleave at the requested ratio.
      const double due = cfg.expert_fraction * static_cast<double>(e + 1);
      const double had = cfg.expert_fraction * static_cast<double>(e);
      kind = (std::floor(due) > std::floor(had)) ? PolicyKind::Expert : PolicyKind::Random;
    }
    ds.trajectories.push_back(
        roll_episode(spec, kind, cfg.expert_noise, root.derive(static_cast<std::uint64_t>(e))));
  }
  ds.meta.n_train_episodes = static_cast<std::size_t>(
      std::max(1.0, std::floor(cfg.train_fraction * cfg.n_episodes)));
  ds.norm = Normalizer::fit(ds.trajectories, ds.meta.n_train_episodes);
  return ds;
}

double evaluate_policy(const EnvSpec& spec, PolicyKind policy, double expert_noise,
                       int n_episodes, std::uint64_t seed) {
  if (policy == PolicyKind::Mixture)
    throw ContractError("evaluate_policy: evaluate expert or random, not the mixture");
  double total = 0.0;
  Rng root(seed);
  for (int e = 0; e < n_episodes; ++e) {
    Trajectory tr = roll_episode(spec, policy, expert_noise,
                                 root.derive(static_cast<std::uint64_t>(e)));
    for (double r : tr.rewards) total += r;
  }
  return total / static_cast<double>(n_episodes);
}

}  // namespace ctp
