#include <doctest.h>

#include <cmath>

#include "ctp/conditioning.hpp"
#include "ctp/errors.hpp"
#include "ctp/mlp.hpp"
#include "ctp/rng.hpp"
#include "ctp/teacher.hpp"

using namespace ctp;

namespace {

TeacherModel zero_backbone_teacher(std::int64_t H, std::int64_t d, bool conditioned = false) {
  TeacherModel m;
  m.horizon = H;
  m.state_dim = d;
  m.conditioned = conditioned;
  m.backbone = Mlp::from_layers({Tensor::zeros({H * d + kTimeEmbedDim, H * d})},
                                {Tensor::zeros({H * d})});
  return m;
}

TeacherModel random_teacher(std::int64_t H, std::int64_t d, bool conditioned, Rng& rng) {
  NoiseSchedule sched;
  return TeacherModel::create(H, d, {16}, sched, 0.5, conditioned, rng);
}

}  // namespace

TEST_SUITE("denoise") {
  TEST_CASE("zero residual network at t=eps returns the input exactly") {
    TeacherModel m = zero_backbone_teacher(2, 3);
    Rng rng(1);
    Tensor x = rng.normal_tensor({2, 6});
    Tensor out = m.denoise(x, {m.schedule.eps});
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
  }

  TEST_CASE("zero residual network at t >> eps returns c_skip(t)*x") {
    TeacherModel m = zero_backbone_teacher(2, 3);
    Rng rng(2);
    Tensor x = rng.normal_tensor({1, 6});
    const double t = 5.0;
    const double cs = skip_coeffs(t, m.sigma_data, m.schedule.eps).c_skip;
    Tensor out = m.denoise(x, {t});
    for (std::int64_t i = 0; i < x.size(); ++i)
      CHECK(out[i] == doctest::Approx(cs * x[i]).epsilon(1e-14));
  }

  TEST_CASE("boundary identity holds for arbitrary trained weights") {
    Rng rng(3);
    TeacherModel m = random_teacher(3, 2, false, rng);
    Tensor x = rng.normal_tensor({4, 6});
    Tensor out = m.denoise(x, {m.schedule.eps});
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(std::fabs(out[i] - x[i]) < 1e-10);
  }

  TEST_CASE("non-finite input is a numeric error") {
    TeacherModel m = zero_backbone_teacher(1, 2);
    Tensor x = Tensor::from_data({1, 2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(m.denoise(x, {1.0}), NumericError);
  }

  TEST_CASE("network-call instrumentation counts one call per forward") {
    Rng rng(4);
    TeacherModel m = random_teacher(2, 2, false, rng);
    m.eval_count->store(0);
    m.denoise(rng.normal_tensor({5, 4}), {1.0});
    CHECK(m.eval_count->load() == 1);
  }
}

TEST_SUITE("heun_solve") {
  TEST_CASE("identity denoiser gives zero drift") {
    DenoiseFn identity = [](const Tensor& x, const std::vector<double>&) { return x; };
    Rng rng(5);
    Tensor x = rng.normal_tensor({2, 4});
    Tensor out = heun_integrate(identity, 0.002, x, {10.0}, {0.5}, 4);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
  }

  TEST_CASE("zero denoiser follows the closed form x_u = x_t * (u/t)") {
    // dx/dt = x/t has the linear solution x = C*t, which Heun integrates
    // exactly; one substep over (1, 0.5) from x=1 lands on 0.5.
    DenoiseFn zero = [](const Tensor& x, const std::vector<double>&) {
      return Tensor::zeros(x.shape());
    };
    Tensor x = Tensor::from_data({1, 1}, {1.0});
    Tensor one = heun_integrate(zero, 0.002, x, {1.0}, {0.5}, 1);
    CHECK(one[0] == doctest::Approx(0.5).epsilon(1e-14));
    for (int substeps : {1, 2, 5, 16}) {
      Tensor out = heun_integrate(zero, 0.002, x, {2.0}, {0.25}, substeps);
      CHECK(out[0] == doctest::Approx(0.25 / 2.0).epsilon(1e-12));
    }
  }

  TEST_CASE("half-identity denoiser shows second-order convergence") {
    // D = x/2 gives dx/dt = x/(2t) with closed form x_u = x_t*sqrt(u/t);
    // the solution is curved so the global error scales as O(h^2).
    DenoiseFn half = [](const Tensor& x, const std::vector<double>&) {
      Tensor out = x;
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= 0.5;
      return out;
    };
    const double t = 8.0, u = 0.5;
    const double exact = std::sqrt(u / t);
    Tensor x = Tensor::from_data({1, 1}, {1.0});
    double prev_err = 0.0;
    for (int substeps : {4, 8, 16, 32, 64}) {
      Tensor out = heun_integrate(half, 0.002, x, {t}, {u}, substeps);
      const double err = std::fabs(out[0] - exact);
      if (substeps > 4) {
        const double ratio = prev_err / err;
        CHECK(ratio > 3.4);
        CHECK(ratio < 4.6);
      }
      prev_err = err;
    }
  }

  TEST_CASE("vanishing interval leaves the state continuous") {
    Rng rng(6);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Tensor x = rng.normal_tensor({1, 4});
    double prev_gap = 1e9;
    for (double delta : {1e-1, 1e-3, 1e-5}) {
      Tensor out = heun_solve(m, x, 2.0, 2.0 - delta, {.substeps = 1});
      double gap = 0.0;
      for (std::int64_t i = 0; i < x.size(); ++i) gap = std::max(gap, std::fabs(out[i] - x[i]));
      CHECK(gap < prev_gap);
      prev_gap = gap;
    }
    CHECK(prev_gap < 1e-4);
  }

  TEST_CASE("u >= t is a contract error") {
    Rng rng(7);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Tensor x = rng.normal_tensor({1, 4});
    CHECK_THROWS_AS(heun_solve(m, x, 1.0, 1.0, {.substeps = 1}), ContractError);
    CHECK_THROWS_AS(heun_solve(m, x, 1.0, 2.0, {.substeps = 1}), ContractError);
  }

  TEST_CASE("conditioned solve keeps the first state slot exact") {
    Rng rng(8);
    TeacherModel m = random_teacher(3, 2, true, rng);
    Tensor x = rng.normal_tensor({2, 6});
    Tensor cond = rng.normal_tensor({2, 2});
    Tensor out = heun_solve(m, x, 40.0, 0.002, {.substeps = 6}, &cond);
    for (std::int64_t r = 0; r < 2; ++r)
      for (std::int64_t j = 0; j < 2; ++j) CHECK(out.at(r, j) == cond.at(r, j));
  }

  TEST_CASE("per-row intervals: u == t rows stay put") {
    Rng rng(9);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Tensor x = rng.normal_tensor({2, 4});
    Tensor out = heun_solve_rows(m, x, {5.0, 3.0}, {5.0, 1.0}, {.substeps = 2});
    for (std::int64_t j = 0; j < 4; ++j) CHECK(out.at(0, j) == x.at(0, j));
    bool moved = false;
    for (std::int64_t j = 0; j < 4; ++j)
      if (out.at(1, j) != x.at(1, j)) moved = true;
    CHECK(moved);
  }
}

TEST_SUITE("teacher_loss") {
  TEST_CASE("noise pinned at eps makes the loss vanish for any model") {
    Rng rng(10);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Tensor clean = rng.normal_tensor({8, 4});
    TrainNoiseDist at_eps{std::log(m.schedule.eps), 0.0};
    Rng loss_rng(0);
    const double loss = teacher_loss_value(m, clean, at_eps, loss_rng);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-4);
  }

  TEST_CASE("matches an independent recomputation replaying the rng") {
    Rng rng(11);
    TeacherModel m = random_teacher(2, 3, false, rng);
    Tensor clean = rng.normal_tensor({6, 6});
    TrainNoiseDist dist;

    Rng a(123);
    const double got = teacher_loss_value(m, clean, dist, a);

    // Oracle: replay the same draw order (sigmas first, then row-major
    // noise) and average the per-window squared error.
    Rng b(123);
    std::vector<double> sigma(6);
    for (auto& s : sigma) s = sample_sigma(dist, m.schedule, b);
    Tensor noisy = clean;
    for (std::int64_t r = 0; r < 6; ++r)
      for (std::int64_t c = 0; c < 6; ++c) noisy[r * 6 + c] += sigma[r] * b.normal();
    Tensor den = m.denoise(noisy, sigma);
    double want = 0.0;
    for (std::int64_t r = 0; r < 6; ++r)
      for (std::int64_t c = 0; c < 6; ++c) {
        const double d = den[r * 6 + c] - clean[r * 6 + c];
        want += d * d;
      }
    want /= 6.0;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("conditioned loss clamps the slot on input and masks it in the loss") {
    Rng rng(12);
    TeacherModel m = random_teacher(2, 2, true, rng);
    Tensor clean = rng.normal_tensor({4, 4});
    TrainNoiseDist dist;

    Rng a(5);
    const double got = teacher_loss_value(m, clean, dist, a);

    Rng b(5);
    std::vector<double> sigma(4);
    for (auto& s : sigma) s = sample_sigma(dist, m.schedule, b);
    Tensor noisy = clean;
    for (std::int64_t r = 0; r < 4; ++r)
      for (std::int64_t c = 0; c < 4; ++c) noisy[r * 4 + c] += sigma[r] * b.normal();
    Tensor cond({4, 2});
    for (std::int64_t r = 0; r < 4; ++r)
      for (std::int64_t j = 0; j < 2; ++j) cond[r * 2 + j] = clean[r * 4 + j];
    Tensor den = m.denoise(noisy, sigma, &cond);
    double want = 0.0;
    for (std::int64_t r = 0; r < 4; ++r)
      for (std::int64_t c = 2; c < 4; ++c) {  // first state slot excluded
        const double d = den[r * 4 + c] - clean[r * 4 + c];
        want += d * d;
      }
    want /= 4.0;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("empty batch is a contract error") {
    Rng rng(13);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Rng loss_rng(0);
    CHECK_THROWS_AS(teacher_loss_value(m, Tensor::zeros({0, 4}), {}, loss_rng), ContractError);
  }

  TEST_CASE("gradients match central finite differences") {
    Rng rng(14);
    TeacherModel m = random_teacher(2, 2, false, rng);
    Tensor clean = rng.normal_tensor({3, 4});
    TrainNoiseDist dist;

    Mlp::Vars vars = m.backbone.lift(true);
    Rng g(77);
    ad::Var loss = teacher_loss(m, vars, clean, dist, g);
    ad::backward(loss);

    auto params = m.backbone.named_params();
    std::vector<Tensor> grads;
    for (std::size_t l = 0; l < vars.w.size(); ++l) {
      grads.push_back(vars.w[l].grad());
      grads.push_back(vars.b[l].grad());
    }
    const double step = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i].second;
      for (std::int64_t j = 0; j < std::min<std::int64_t>(p.size(), 6); ++j) {
        const double orig = p[j];
        p[j] = orig + step;
        Rng r1(77);
        const double up = teacher_loss_value(m, clean, dist, r1);
        p[j] = orig - step;
        Rng r2(77);
        const double down = teacher_loss_value(m, clean, dist, r2);
        p[j] = orig;
        const double fd = (up - down) / (2.0 * step);
        const double ad_g = grads[i][j];
        const double denom = std::max({std::fabs(fd), std::fabs(ad_g), 1e-6});
        CHECK(std::fabs(fd - ad_g) / denom < 1e-4);
      }
    }
  }
}

TEST_SUITE("teacher_checkpoint") {
  TEST_CASE("round trip preserves forward outputs bit-exactly") {
    Rng rng(15);
    TeacherModel m = random_teacher(4, 2, true, rng);
    const std::string path = "teacher_roundtrip.bin";
    m.to_checkpoint().save(path);
    TeacherModel back = TeacherModel::from_checkpoint(Checkpoint::load(path));
    Tensor x = rng.normal_tensor({3, 8});
    Tensor cond = rng.normal_tensor({3, 2});
    Tensor a = m.denoise(x, {2.5}, &cond);
    Tensor b = back.denoise(x, {2.5}, &cond);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(back.conditioned == m.conditioned);
    std::remove(path.c_str());
  }
}
