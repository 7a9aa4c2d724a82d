#include "ctp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "ctp/binio.hpp"
#include "ctp/dynamics.hpp"
#include "ctp/errors.hpp"

namespace ctp {

namespace {

constexpr char kMagic[5] = "CTPD";

// Degenerate dimensions (constant across the split) map to 0.
double norm_one(double x, double lo, double hi, std::atomic<std::int64_t>* clips) {
  if (hi - lo < 1e-12) return 0.0;
  double y = 2.0 * (x - lo) / (hi - lo) - 1.0;
  if (y < -1.0 || y > 1.0) {
    y = std::clamp(y, -1.0, 1.0);
    if (clips) clips->fetch_add(1, std::memory_order_relaxed);
  }
  return y;
}

double denorm_one(double y, double lo, double hi) {
  if (hi - lo < 1e-12) return lo;
  return (y + 1.0) * 0.5 * (hi - lo) + lo;
}

Tensor apply_norm(const Tensor& x, const Tensor& lo, const Tensor& hi,
                  std::atomic<std::int64_t>* clips) {
  if (x.rank() != 2 || x.cols() != lo.size())
    throw DimensionError("normalize: input " + x.shape_str());
  Tensor out = x;
  for (std::int64_t r = 0; r < x.rows(); ++r)
    for (std::int64_t c = 0; c < x.cols(); ++c)
      out[r * x.cols() + c] = norm_one(x[r * x.cols() + c], lo[c], hi[c], clips);
  return out;
}

Tensor apply_denorm(const Tensor& x, const Tensor& lo, const Tensor& hi) {
  if (x.rank() != 2 || x.cols() != lo.size())
    throw DimensionError("denormalize: input " + x.shape_str());
  Tensor out = x;
  for (std::int64_t r = 0; r < x.rows(); ++r)
    for (std::int64_t c = 0; c < x.cols(); ++c)
      out[r * x.cols() + c] = denorm_one(x[r * x.cols() + c], lo[c], hi[c]);
  return out;
}

std::pair<std::size_t, std::size_t> split_range(const Dataset& ds, Split split) {
  const std::size_t n = ds.trajectories.size();
  const std::size_t cut = std::min(ds.meta.n_train_episodes, n);
  switch (split) {
    case Split::Train: return {0, cut};
    case Split::Holdout: return {cut, n};
    case Split::All: return {0, n};
  }
  return {0, n};
}

}  // namespace

Normalizer Normalizer::fit(const std::vector<Trajectory>& trajs, std::size_t n_train_episodes) {
  if (trajs.empty() || n_train_episodes == 0)
    throw ContractError("Normalizer::fit: no training episodes");
  const std::int64_t d_s = trajs[0].states.cols();
  const std::int64_t d_a = trajs[0].actions.cols();
  Normalizer n;
  n.s_min = Tensor::full({d_s}, std::numeric_limits<double>::infinity());
  n.s_max = Tensor::full({d_s}, -std::numeric_limits<double>::infinity());
  n.a_min = Tensor::full({d_a}, std::numeric_limits<double>::infinity());
  n.a_max = Tensor::full({d_a}, -std::numeric_limits<double>::infinity());
  const std::size_t cut = std::min(n_train_episodes, trajs.size());
  for (std::size_t e = 0; e < cut; ++e) {
    const Trajectory& tr = trajs[e];
    for (std::int64_t r = 0; r < tr.length(); ++r) {
      for (std::int64_t c = 0; c < d_s; ++c) {
        n.s_min[c] = std::min(n.s_min[c], tr.states.at(r, c));
        n.s_max[c] = std::max(n.s_max[c], tr.states.at(r, c));
      }
      for (std::int64_t c = 0; c < d_a; ++c) {
        n.a_min[c] = std::min(n.a_min[c], tr.actions.at(r, c));
        n.a_max[c] = std::max(n.a_max[c], tr.actions.at(r, c));
      }
    }
  }
  return n;
}

Tensor Normalizer::normalize_states(const Tensor& s) const {
  return apply_norm(s, s_min, s_max, clip_count.get());
}
Tensor Normalizer::denormalize_states(const Tensor& s) const {
  return apply_denorm(s, s_min, s_max);
}
Tensor Normalizer::normalize_actions(const Tensor& a) const {
  return apply_norm(a, a_min, a_max, clip_count.get());
}
Tensor Normalizer::denormalize_actions(const Tensor& a) const {
  return apply_denorm(a, a_min, a_max);
}

void Dataset::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingArtifactError("cannot open dataset for writing: " + path);
  os.write(kMagic, 4);
  binio::write_u32(os, DatasetMeta::kFormatVersion);
  binio::write_str(os, meta.env_id);
  binio::write_i64(os, meta.d_s);
  binio::write_i64(os, meta.d_a);
  binio::write_u32(os, static_cast<std::uint32_t>(meta.stride));
  binio::write_u32(os, static_cast<std::uint32_t>(meta.horizon));
  binio::write_f64(os, meta.gamma);
  binio::write_u64(os, meta.n_train_episodes);
  for (const Tensor* t : {&norm.s_min, &norm.s_max, &norm.a_min, &norm.a_max})
    for (std::int64_t i = 0; i < t->size(); ++i) binio::write_f64(os, (*t)[i]);
  binio::write_u64(os, trajectories.size());
  for (const Trajectory& tr : trajectories) {
    binio::write_u64(os, static_cast<std::uint64_t>(tr.length()));
    binio::write_u32(os, tr.terminal ? 1 : 0);
    for (std::int64_t i = 0; i < tr.states.size(); ++i) binio::write_f64(os, tr.states[i]);
    for (std::int64_t i = 0; i < tr.actions.size(); ++i) binio::write_f64(os, tr.actions[i]);
    for (double r : tr.rewards) binio::write_f64(os, r);
  }
  if (!os) throw MissingArtifactError("dataset write failed: " + path);

  // Structured-text echo of the header next to the binary file.
  nlohmann::json j;
  j["format_version"] = DatasetMeta::kFormatVersion;
  j["env_id"] = meta.env_id;
  j["d_s"] = meta.d_s;
  j["d_a"] = meta.d_a;
  j["stride"] = meta.stride;
  j["horizon"] = meta.horizon;
  j["gamma"] = meta.gamma;
  j["n_train_episodes"] = meta.n_train_episodes;
  j["n_episodes"] = trajectories.size();
  std::int64_t n_transitions = 0;
  for (const auto& tr : trajectories) n_transitions += tr.length();
  j["n_transitions"] = n_transitions;
  std::ofstream js(path + ".json", std::ios::trunc);
  js << j.dump(2) << "\n";
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("dataset not found: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw MissingArtifactError("not a dataset file: " + path);
  const std::uint32_t version = binio::read_u32(is);
  if (version != DatasetMeta::kFormatVersion)
    throw MissingArtifactError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.meta.env_id = binio::read_str(is);
  ds.meta.d_s = binio::read_i64(is);
  ds.meta.d_a = binio::read_i64(is);
  ds.meta.stride = static_cast<int>(binio::read_u32(is));
  ds.meta.horizon = static_cast<int>(binio::read_u32(is));
  ds.meta.gamma = binio::read_f64(is);
  ds.meta.n_train_episodes = binio::read_u64(is);
  ds.norm.s_min = Tensor({ds.meta.d_s});
  ds.norm.s_max = Tensor({ds.meta.d_s});
  ds.norm.a_min = Tensor({ds.meta.d_a});
  ds.norm.a_max = Tensor({ds.meta.d_a});
  for (Tensor* t : {&ds.norm.s_min, &ds.norm.s_max, &ds.norm.a_min, &ds.norm.a_max})
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] = binio::read_f64(is);
  const std::uint64_t n_traj = binio::read_u64(is);
  ds.trajectories.reserve(n_traj);
  for (std::uint64_t k = 0; k < n_traj; ++k) {
    Trajectory tr;
    const auto T = static_cast<std::int64_t>(binio::read_u64(is));
    tr.terminal = binio::read_u32(is) != 0;
    tr.states = Tensor({T, ds.meta.d_s});
    tr.actions = Tensor({T, ds.meta.d_a});
    tr.rewards.resize(static_cast<std::size_t>(T));
    for (std::int64_t i = 0; i < tr.states.size(); ++i) tr.states[i] = binio::read_f64(is);
    for (std::int64_t i = 0; i < tr.actions.size(); ++i) tr.actions[i] = binio::read_f64(is);
    for (auto& r : tr.rewards) r = binio::read_f64(is);
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

WindowSet make_windows(const Dataset& ds, int horizon, int stride, Split split) {
  if (horizon < 1 || stride < 1) throw ContractError("make_windows: horizon/stride must be >= 1");
  const auto [begin, end] = split_range(ds, split);
  const std::int64_t d_s = ds.meta.d_s;
  const std::int64_t flat = static_cast<std::int64_t>(horizon) * d_s;

  std::vector<std::pair<std::size_t, std::int64_t>> starts;  // (episode, k)
  for (std::size_t e = begin; e < end; ++e) {
    const std::int64_t T = ds.trajectories[e].length();
    const std::int64_t span = static_cast<std::int64_t>(horizon - 1) * stride;
    for (std::int64_t k = 0; k + span <= T - 1; ++k) starts.emplace_back(e, k);
  }
  if (starts.empty()) throw ContractError("make_windows: no window fits the episodes");

  WindowSet ws;
  ws.horizon = horizon;
  ws.state_dim = d_s;
  ws.windows = Tensor({static_cast<std::int64_t>(starts.size()), flat});
  ws.conds = Tensor({static_cast<std::int64_t>(starts.size()), d_s});
  ws.returns.resize(starts.size());

  std::size_t prev_episode = static_cast<std::size_t>(-1);
  Tensor norm_states;
  std::vector<double> returns;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto [e, k] = starts[i];
    const Trajectory& tr = ds.trajectories[e];
    if (e != prev_episode) {
      norm_states = ds.norm.normalize_states(tr.states);
      returns = compute_returns(tr.rewards, ds.meta.gamma);
      prev_episode = e;
    }
    for (int h = 0; h < horizon; ++h) {
      const std::int64_t row = k + static_cast<std::int64_t>(h) * stride;
      for (std::int64_t c = 0; c < d_s; ++c)
        ws.windows[static_cast<std::int64_t>(i) * flat + h * d_s + c] = norm_states.at(row, c);
    }
    for (std::int64_t c = 0; c < d_s; ++c)
      ws.conds[static_cast<std::int64_t>(i) * d_s + c] = norm_states.at(k, c);
    ws.returns[i] = returns[static_cast<std::size_t>(k)];
  }
  return ws;
}

TransitionSet make_transitions(const Dataset& ds, int stride, Split split) {
  if (stride < 1) throw ContractError("make_transitions: stride must be >= 1");
  const auto [begin, end] = split_range(ds, split);
  const std::int64_t d_s = ds.meta.d_s, d_a = ds.meta.d_a;

  TransitionSet ts;
  std::vector<std::pair<std::size_t, std::int64_t>> idx;
  for (std::size_t e = begin; e < end; ++e) {
    const std::int64_t T = ds.trajectories[e].length();
    if (T <= stride) {
      ++ts.skipped;
      continue;
    }
    for (std::int64_t k = 0; k + stride <= T - 1; ++k) idx.emplace_back(e, k);
  }
  ts.inputs = Tensor({static_cast<std::int64_t>(idx.size()), 2 * d_s});
  ts.targets = Tensor({static_cast<std::int64_t>(idx.size()), d_a});
  std::size_t prev_episode = static_cast<std::size_t>(-1);
  Tensor ns, na;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto [e, k] = idx[i];
    if (e != prev_episode) {
      ns = ds.norm.normalize_states(ds.trajectories[e].states);
      na = ds.norm.normalize_actions(ds.trajectories[e].actions);
      prev_episode = e;
    }
    for (std::int64_t c = 0; c < d_s; ++c) {
      ts.inputs[static_cast<std::int64_t>(i) * 2 * d_s + c] = ns.at(k, c);
      ts.inputs[static_cast<std::int64_t>(i) * 2 * d_s + d_s + c] = ns.at(k + stride, c);
    }
    for (std::int64_t c = 0; c < d_a; ++c)
      ts.targets[static_cast<std::int64_t>(i) * d_a + c] = na.at(k, c);
  }
  return ts;
}

}  // namespace ctp
