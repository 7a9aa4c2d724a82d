#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp {

// One episode of interaction; the dataset atom.
struct Trajectory {
  Tensor states;                // [T, d_s]
  Tensor actions;               // [T, d_a]
  std::vector<double> rewards;  // length T
  bool terminal = false;        // reached a terminal state (vs truncated)

  std::int64_t length() const { return states.rank() == 2 ? states.rows() : 0; }
};

// Per-dimension affine map to [-1,1] fitted on the training split only.
// Out-of-range values (possible on held-out data) are clipped and counted.
struct Normalizer {
  Tensor s_min, s_max;  // [d_s]
  Tensor a_min, a_max;  // [d_a]
  std::shared_ptr<std::atomic<std::int64_t>> clip_count =
      std::make_shared<std::atomic<std::int64_t>>(0);

  static Normalizer fit(const std::vector<Trajectory>& trajs, std::size_t n_train_episodes);

  // rows of states/actions; shapes preserved.
  Tensor normalize_states(const Tensor& s) const;
  Tensor denormalize_states(const Tensor& s) const;
  Tensor normalize_actions(const Tensor& a) const;
  Tensor denormalize_actions(const Tensor& a) const;
};

struct DatasetMeta {
  static constexpr std::uint32_t kFormatVersion = 1;
  std::string env_id;
  std::int64_t d_s = 0, d_a = 0;
  int stride = 1;   // planning stride M
  int horizon = 1;  // window horizon H
  double gamma = 0.99;
  std::size_t n_train_episodes = 0;  // normalizer fitted on [0, n_train)
};

struct Dataset {
  DatasetMeta meta;
  Normalizer norm;
  std::vector<Trajectory> trajectories;

  // Binary container plus a structured-text sidecar (<path>.json).
  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

// Flattened training windows at stride M: normalized states, the
// conditioning state (window slot 0), and the discounted-return label of
// the window's start index. Windows crossing an episode end are dropped.
struct WindowSet {
  Tensor windows;               // [N, H*d_s]
  Tensor conds;                 // [N, d_s]
  std::vector<double> returns;  // R_k per window
  std::int64_t horizon = 0, state_dim = 0;
};

enum class Split { Train, Holdout, All };

WindowSet make_windows(const Dataset& ds, int horizon, int stride, Split split = Split::All);

// (s_k, s_{k+M}) -> a_k triples for the inverse-dynamics regression,
// normalized. Episodes shorter than the stride contribute nothing; the
// skipped count is reported.
struct TransitionSet {
  Tensor inputs;   // [N, 2*d_s]
  Tensor targets;  // [N, d_a]
  std::int64_t skipped = 0;
};

TransitionSet make_transitions(const Dataset& ds, int stride, Split split = Split::All);

}  // namespace ctp
