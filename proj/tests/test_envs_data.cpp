#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctp/dynamics.hpp"
#include "ctp/envs.hpp"
#include "ctp/errors.hpp"

using namespace ctp;

namespace {

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE("env_step") {
  TEST_CASE("zero action and zero velocity is a fixed point") {
    for (const char* id : {"integrator", "maze"}) {
      EnvSpec spec = EnvSpec::by_id(id);
      Tensor s = Tensor::zeros({spec.d_s});
      s[0] = 1.0;  // off-goal position, zero velocity
      if (spec.kind == EnvKind::PointMaze) s[1] = 1.0;
      StepResult res = env_step(spec, s, Tensor::zeros({spec.d_a}));
      for (std::int64_t i = 0; i < spec.d_s; ++i) CHECK(res.next[i] == s[i]);
    }
  }

  TEST_CASE("integrator Euler arithmetic") {
    EnvSpec spec = EnvSpec::double_integrator();
    StepResult res = env_step(spec, Tensor::from_data({2}, {0.0, 0.0}),
                              Tensor::from_data({1}, {1.0}));
    CHECK(res.next[0] == 0.0);
    CHECK(res.next[1] == doctest::Approx(0.1).epsilon(1e-15));
  }

  TEST_CASE("stepping into the goal region gives reward 1 and done") {
    EnvSpec spec = EnvSpec::point_maze();
    Tensor s = Tensor::from_data({4}, {spec.goal_x - 0.05, spec.goal_y, 0.0, 0.0});
    StepResult res = env_step(spec, s, Tensor::zeros({2}));
    CHECK(res.reward == 1.0);
    CHECK(res.done);
  }

  TEST_CASE("walls block movement and zero the blocked velocity") {
    EnvSpec spec = EnvSpec::point_maze();
    // Heading up into the bar from below.
    Tensor s = Tensor::from_data({4}, {1.0, 1.65, 0.0, 1.0});
    StepResult res = env_step(spec, s, Tensor::zeros({2}));
    CHECK(res.next[1] == 1.65);  // y move rejected
    CHECK(res.next[3] == 0.0);   // vy zeroed
  }

  TEST_CASE("actions are clipped into bounds") {
    EnvSpec spec = EnvSpec::double_integrator();
    StepResult res = env_step(spec, Tensor::from_data({2}, {0.0, 0.0}),
                              Tensor::from_data({1}, {100.0}));
    CHECK(res.next[1] == doctest::Approx(spec.act_limit * spec.dt));
  }
}

TEST_SUITE("collect_dataset") {
  TEST_CASE("noisy expert reaches the maze goal in at least 90% of episodes") {
    // Oracle: rollout statistics of the collecting policy itself.
    EnvSpec spec = EnvSpec::point_maze();
    CollectConfig cfg;
    cfg.n_episodes = 60;
    cfg.policy = PolicyKind::Expert;
    Dataset ds = collect_dataset(spec, cfg);
    int success = 0;
    for (const auto& tr : ds.trajectories) success += tr.terminal ? 1 : 0;
    CHECK(success >= 54);
  }

  TEST_CASE("zero episodes fail downstream, not silently") {
    EnvSpec spec = EnvSpec::double_integrator();
    CollectConfig cfg;
    cfg.n_episodes = 0;
    CHECK_THROWS_AS(collect_dataset(spec, cfg), ContractError);
  }

  TEST_CASE("same seed produces a bit-identical dataset file") {
    EnvSpec spec = EnvSpec::double_integrator();
    CollectConfig cfg;
    cfg.n_episodes = 8;
    cfg.seed = 9;
    Dataset a = collect_dataset(spec, cfg);
    Dataset b = collect_dataset(spec, cfg);
    a.save("ds_a.bin");
    b.save("ds_b.bin");
    CHECK(file_bytes("ds_a.bin") == file_bytes("ds_b.bin"));
    std::remove("ds_a.bin");
    std::remove("ds_b.bin");
    std::remove("ds_a.bin.json");
    std::remove("ds_b.bin.json");
  }

  TEST_CASE("mixture interleaves expert and random episodes") {
    EnvSpec spec = EnvSpec::point_maze();
    CollectConfig cfg;
    cfg.n_episodes = 40;
    cfg.policy = PolicyKind::Mixture;
    cfg.expert_fraction = 0.5;
    Dataset ds = collect_dataset(spec, cfg);
    int success = 0;
    for (const auto& tr : ds.trajectories) success += tr.terminal ? 1 : 0;
    CHECK(success >= 15);  // ~20 expert episodes nearly all succeed
    CHECK(success <= 30);  // random episodes mostly fail
  }
}

TEST_SUITE("dataset_io") {
  TEST_CASE("save/load round trip is bit-exact including normalizer and metadata") {
    EnvSpec spec = EnvSpec::point_maze();
    CollectConfig cfg;
    cfg.n_episodes = 6;
    cfg.horizon = 8;
    cfg.stride = 2;
    cfg.gamma = 0.98;
    Dataset ds = collect_dataset(spec, cfg);
    ds.save("ds_rt.bin");
    Dataset back = Dataset::load("ds_rt.bin");
    back.save("ds_rt2.bin");
    CHECK(file_bytes("ds_rt.bin") == file_bytes("ds_rt2.bin"));
    CHECK(back.meta.env_id == "maze");
    CHECK(back.meta.stride == 2);
    CHECK(back.meta.horizon == 8);
    CHECK(back.meta.gamma == 0.98);
    REQUIRE(back.trajectories.size() == ds.trajectories.size());
    for (std::size_t e = 0; e < ds.trajectories.size(); ++e)
      for (std::int64_t i = 0; i < ds.trajectories[e].states.size(); ++i)
        CHECK(back.trajectories[e].states[i] == ds.trajectories[e].states[i]);
    std::remove("ds_rt.bin");
    std::remove("ds_rt2.bin");
    std::remove("ds_rt.bin.json");
    std::remove("ds_rt2.bin.json");
  }

  TEST_CASE("missing file raises a missing-artifact error") {
    CHECK_THROWS_AS(Dataset::load("nope.bin"), MissingArtifactError);
  }
}

TEST_SUITE("normalizer") {
  TEST_CASE("round trip is the identity within 1e-12 for in-range values") {
    EnvSpec spec = EnvSpec::double_integrator();
    CollectConfig cfg;
    cfg.n_episodes = 10;
    Dataset ds = collect_dataset(spec, cfg);
    const Tensor& s = ds.trajectories[0].states;
    Tensor round = ds.norm.denormalize_states(ds.norm.normalize_states(s));
    for (std::int64_t i = 0; i < s.size(); ++i) CHECK(std::fabs(round[i] - s[i]) < 1e-12);
  }

  TEST_CASE("held-out extremes are clipped and counted") {
    Trajectory tr;
    tr.states = Tensor::from_data({2, 1}, {0.0, 1.0});
    tr.actions = Tensor::from_data({2, 1}, {0.0, 1.0});
    tr.rewards = {0.0, 0.0};
    Normalizer n = Normalizer::fit({tr}, 1);
    CHECK(n.clip_count->load() == 0);
    Tensor out = n.normalize_states(Tensor::from_data({1, 1}, {2.0}));  // outside [0,1]
    CHECK(out[0] == 1.0);
    CHECK(n.clip_count->load() == 1);
  }
}

TEST_SUITE("make_windows") {
  namespace {
  Dataset tiny_dataset(std::int64_t T, int horizon, int stride) {
    Dataset ds;
    ds.meta.env_id = "integrator";
    ds.meta.d_s = 2;
    ds.meta.d_a = 1;
    ds.meta.horizon = horizon;
    ds.meta.stride = stride;
    ds.meta.gamma = 0.5;
    ds.meta.n_train_episodes = 1;
    Trajectory tr;
    tr.states = Tensor({T, 2});
    for (std::int64_t r = 0; r < T; ++r) {
      tr.states.at(r, 0) = static_cast<double>(r);
      tr.states.at(r, 1) = -static_cast<double>(r);
    }
    tr.actions = Tensor({T, 1});
    tr.rewards.assign(static_cast<std::size_t>(T), 1.0);
    ds.trajectories.push_back(std::move(tr));
    ds.norm = Normalizer::fit(ds.trajectories, 1);
    return ds;
  }
  }  // namespace

  TEST_CASE("T=5, H=4, M=1 gives 2 windows") {
    Dataset ds = tiny_dataset(5, 4, 1);
    WindowSet ws = make_windows(ds, 4, 1);
    CHECK(ws.windows.rows() == 2);
  }

  TEST_CASE("T=5, H=2, M=4 gives 1 window using states 0 and 4") {
    Dataset ds = tiny_dataset(5, 2, 4);
    WindowSet ws = make_windows(ds, 2, 4);
    REQUIRE(ws.windows.rows() == 1);
    // Normalized states of rows 0 and 4 are the extremes -1 and 1.
    CHECK(ws.windows[0] == -1.0);
    CHECK(ws.windows[2] == 1.0);
  }

  TEST_CASE("all emitted entries are inside [-1, 1]") {
    EnvSpec spec = EnvSpec::point_maze();
    CollectConfig cfg;
    cfg.n_episodes = 12;
    cfg.horizon = 8;
    cfg.stride = 2;
    Dataset ds = collect_dataset(spec, cfg);
    WindowSet ws = make_windows(ds, 8, 2, Split::All);
    for (std::int64_t i = 0; i < ws.windows.size(); ++i) {
      CHECK(ws.windows[i] >= -1.0);
      CHECK(ws.windows[i] <= 1.0);
    }
  }

  TEST_CASE("labels reproduce the return recursion exactly") {
    Dataset ds = tiny_dataset(6, 3, 1);
    WindowSet ws = make_windows(ds, 3, 1);
    const auto returns = compute_returns(ds.trajectories[0].rewards, ds.meta.gamma);
    REQUIRE(static_cast<std::size_t>(ws.windows.rows()) <= returns.size());
    for (std::size_t i = 0; i < ws.returns.size(); ++i) CHECK(ws.returns[i] == returns[i]);
  }

  TEST_CASE("no valid window is a contract error") {
    Dataset ds = tiny_dataset(3, 8, 2);
    CHECK_THROWS_AS(make_windows(ds, 8, 2), ContractError);
  }

  TEST_CASE("window count per episode matches the counting rule") {
    Dataset ds = tiny_dataset(20, 8, 2);
    WindowSet ws = make_windows(ds, 8, 2);
    // k + (H-1)*M <= T-1  =>  k <= 19-14 = 5  =>  6 windows
    CHECK(ws.windows.rows() == 6);
  }
}

TEST_SUITE("make_transitions") {
  TEST_CASE("episodes shorter than the stride are skipped with a count") {
    Dataset ds;
    ds.meta.env_id = "integrator";
    ds.meta.d_s = 1;
    ds.meta.d_a = 1;
    ds.meta.n_train_episodes = 2;
    for (std::int64_t T : {2, 8}) {
      Trajectory tr;
      tr.states = Tensor({T, 1});
      tr.actions = Tensor({T, 1});
      tr.rewards.assign(static_cast<std::size_t>(T), 0.0);
      ds.trajectories.push_back(std::move(tr));
    }
    ds.norm = Normalizer::fit(ds.trajectories, 2);
    TransitionSet ts = make_transitions(ds, 4);
    CHECK(ts.skipped == 1);
    CHECK(ts.inputs.rows() == 4);  // k in {0..3} for T=8, M=4
  }
}
