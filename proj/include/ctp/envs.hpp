#pragma once

#include <string>
#include <vector>

#include "ctp/dataset.hpp"
#include "ctp/rng.hpp"
#include "ctp/tensor.hpp"

namespace ctp {

// Desk-scale continuous environments. Transitions are deterministic given
// (s, a); actions are clipped into bounds.
enum class EnvKind { DoubleIntegrator, PointMaze };

struct WallBox {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct EnvSpec {
  EnvKind kind = EnvKind::DoubleIntegrator;
  std::string id = "integrator";
  std::int64_t d_s = 2, d_a = 1;
  double dt = 0.1;
  int max_steps = 80;

  // integrator: state (p, v), dense reward -|p - goal_p|
  double pos_limit = 2.0, vel_limit = 2.0, act_limit = 1.0;
  double goal_p = 1.0;

  // maze: state (x, y, vx, vy) on [0,4]^2, sparse reward 1 in the goal disc
  double goal_x = 0.6, goal_y = 3.4, goal_radius = 0.4;
  std::vector<WallBox> walls;

  static EnvSpec double_integrator();
  static EnvSpec point_maze();
  static EnvSpec by_id(const std::string& id);
};

struct StepResult {
  Tensor next;  // [d_s]
  double reward = 0.0;
  bool done = false;
};

StepResult env_step(const EnvSpec& spec, const Tensor& s, const Tensor& a);
Tensor env_reset(const EnvSpec& spec, Rng& rng);

enum class PolicyKind { Random, Expert, Mixture };
PolicyKind policy_kind_from(const std::string& name);
std::string to_string(PolicyKind kind);

// Scripted data-collection policy. Expert is a PD controller toward a
// waypoint route (plus Gaussian noise); Random samples uniform actions.
class ScriptedPolicy {
 public:
  ScriptedPolicy(const EnvSpec& spec, PolicyKind kind, Rng rng, double noise_scale = 0.25);
  void reset();
  Tensor act(const Tensor& s);

 private:
  EnvSpec spec_;
  PolicyKind kind_;
  Rng rng_;
  double noise_scale_;
  std::size_t waypoint_ = 0;
};

struct CollectConfig {
  int n_episodes = 200;
  std::uint64_t seed = 0;
  PolicyKind policy = PolicyKind::Mixture;
  double expert_fraction = 0.5;   // mixture interleaving ratio
  double expert_noise = 0.25;
  double train_fraction = 0.9;    // normalizer fitted on this prefix
  int horizon = 4;                // stamped into the dataset metadata
  int stride = 1;
  double gamma = 0.99;
};

// Roll one episode with per-episode derived randomness.
Trajectory roll_episode(const EnvSpec& spec, PolicyKind policy, double expert_noise, Rng rng);

Dataset collect_dataset(const EnvSpec& spec, const CollectConfig& cfg);

// Mean undiscounted return of a scripted policy over episodes seeded
// 0..n_episodes-1; the anchor measurements for normalized scores.
double evaluate_policy(const EnvSpec& spec, PolicyKind policy, double expert_noise,
                       int n_episodes, std::uint64_t seed);

}  // namespace ctp
