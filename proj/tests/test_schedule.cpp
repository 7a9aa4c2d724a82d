#include <doctest.h>

#include <cmath>

#include "ctp/errors.hpp"
#include "ctp/schedule.hpp"

using namespace ctp;

TEST_SUITE("karras_times") {
  TEST_CASE("boundary values are exact") {
    NoiseSchedule s;
    s.n_train = 18;
    auto times = karras_times(s);
    CHECK(times.front() == 0.002);
    CHECK(times.back() == 80.0);
  }

  TEST_CASE("N=10, i=5 matches a direct high-precision evaluation") {
    NoiseSchedule s;
    s.n_train = 10;
    auto times = karras_times(s);
    // Independent oracle: direct formula evaluation.
    const double lo = std::pow(0.002, 1.0 / 7.0), hi = std::pow(80.0, 1.0 / 7.0);
    const double expect = std::pow(lo + (4.0 / 9.0) * (hi - lo), 7.0);
    CHECK(times[4] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(times[4] == doctest::Approx(1.50).epsilon(5e-3));
  }

  TEST_CASE("strictly increasing, and exactly uniform at rho=1") {
    NoiseSchedule s;
    s.n_train = 12;
    auto warped = karras_times(s);
    for (std::size_t i = 1; i < warped.size(); ++i) CHECK(warped[i] > warped[i - 1]);

    s.rho = 1.0;
    auto uniform = karras_times(s);
    const double step = (80.0 - 0.002) / 11.0;
    for (std::size_t i = 0; i < uniform.size(); ++i)
      CHECK(uniform[i] == doctest::Approx(0.002 + step * static_cast<double>(i)).epsilon(1e-12));
  }

  TEST_CASE("interior times decrease as rho increases") {
    NoiseSchedule a, b;
    a.n_train = b.n_train = 9;
    a.rho = 3.0;
    b.rho = 9.0;
    auto ta = karras_times(a), tb = karras_times(b);
    for (std::size_t i = 1; i + 1 < ta.size(); ++i) CHECK(tb[i] < ta[i]);
  }

  TEST_CASE("n_train below 2 is a contract error") {
    NoiseSchedule s;
    s.n_train = 1;
    CHECK_THROWS_AS(karras_times(s), ContractError);
  }
}

TEST_SUITE("sampling_grid") {
  TEST_CASE("single step spans eps to t_max") {
    auto g = sampling_grid(80.0, 0.002, 1);
    REQUIRE(g.times.size() == 2);
    CHECK(g.times[0] == 0.002);
    CHECK(g.times[1] == 80.0);
  }

  TEST_CASE("two and four steps by direct substitution") {
    auto g2 = sampling_grid(80.0, 0.002, 2);
    CHECK(g2.times == std::vector<double>{0.002, 40.0, 80.0});
    auto g4 = sampling_grid(80.0, 0.002, 4);
    CHECK(g4.times == std::vector<double>{0.002, 20.0, 40.0, 60.0, 80.0});
  }

  TEST_CASE("pure function: identical across calls") {
    auto a = sampling_grid(80.0, 0.002, 7);
    auto b = sampling_grid(80.0, 0.002, 7);
    CHECK(a.times == b.times);
  }

  TEST_CASE("karras mode reuses the warped spacing") {
    auto g = sampling_grid(80.0, 0.002, 5, GridKind::Karras);
    REQUIRE(g.times.size() == 6);
    CHECK(g.times.front() == 0.002);
    CHECK(g.times.back() == 80.0);
    for (std::size_t i = 1; i < g.times.size(); ++i) CHECK(g.times[i] > g.times[i - 1]);
    // More resolution near eps than the uniform grid.
    CHECK(g.times[1] < 16.0);
  }

  TEST_CASE("n_steps below 1 is a contract error") {
    CHECK_THROWS_AS(sampling_grid(80.0, 0.002, 0), ContractError);
  }
}

TEST_SUITE("sample_sigma") {
  TEST_CASE("degenerate distribution returns exp(log_mean)") {
    NoiseSchedule s;
    Rng rng(0);
    TrainNoiseDist d{-1.2, 0.0};
    for (int i = 0; i < 16; ++i)
      CHECK(sample_sigma(d, s, rng) == doctest::Approx(std::exp(-1.2)).epsilon(1e-15));
  }

  TEST_CASE("log-moment matches the distribution within 3 standard errors") {
    NoiseSchedule s;
    Rng rng(42);
    TrainNoiseDist d{-1.2, 1.2};
    const int n = 100000;
    double sum_log = 0.0;
    int clamped = 0;
    for (int i = 0; i < n; ++i) {
      const double sigma = sample_sigma(d, s, rng);
      if (sigma == s.eps || sigma == s.t_max) ++clamped;
      sum_log += std::log(sigma);
    }
    // Monte-Carlo oracle; clamping at [eps, t_max] touches ~sigma>3.7 std
    // events, rare enough to leave the mean within sampling error.
    const double se = 1.2 / std::sqrt(static_cast<double>(n));
    CHECK(std::fabs(sum_log / n - (-1.2)) < 3.0 * se);
    CHECK(clamped < n / 100);
  }

  TEST_CASE("samples stay inside [eps, t_max]") {
    NoiseSchedule s;
    Rng rng(7);
    TrainNoiseDist d{2.0, 3.0};  // wide: exercises both clamps
    for (int i = 0; i < 10000; ++i) {
      const double sigma = sample_sigma(d, s, rng);
      CHECK(sigma >= s.eps);
      CHECK(sigma <= s.t_max);
    }
  }
}

TEST_SUITE("skip_coeffs") {
  TEST_CASE("boundary: c_skip(eps)=1 and c_out(eps)=0 exactly") {
    auto c = skip_coeffs(0.002, 0.5, 0.002);
    CHECK(c.c_skip == 1.0);
    CHECK(c.c_out == 0.0);
  }

  TEST_CASE("t = sigma_data + eps gives c_skip = 1/2") {
    auto c = skip_coeffs(0.5 + 0.002, 0.5, 0.002);
    CHECK(c.c_skip == doctest::Approx(0.5).epsilon(1e-12));
    // Oracle: direct evaluation of the chosen coefficient form.
    const double t = 0.502, sd = 0.5, eps = 0.002;
    CHECK(c.c_out ==
          doctest::Approx(sd * (t - eps) / std::sqrt(sd * sd + t * t)).epsilon(1e-14));
  }

  TEST_CASE("c_skip decays and |c_out| grows with t") {
    double prev_skip = 2.0, prev_out = -1.0;
    for (double t : {0.002, 0.1, 0.5, 2.0, 10.0, 80.0}) {
      auto c = skip_coeffs(t, 0.5, 0.002);
      CHECK(c.c_skip < prev_skip);
      CHECK(c.c_out > prev_out);
      prev_skip = c.c_skip;
      prev_out = c.c_out;
    }
  }

  TEST_CASE("t below eps is a contract error") {
    CHECK_THROWS_AS(skip_coeffs(0.001, 0.5, 0.002), ContractError);
  }
}
