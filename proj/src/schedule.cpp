#include "ctp/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "ctp/errors.hpp"

namespace ctp {

std::vector<double> karras_times(const NoiseSchedule& schedule) {
  if (schedule.n_train < 2) throw ContractError("karras_times: n_train must be >= 2");
  if (!(schedule.eps > 0.0 && schedule.eps < schedule.t_max))
    throw ContractError("karras_times: need 0 < eps < t_max");
  const double inv_rho = 1.0 / schedule.rho;
  const double lo = std::pow(schedule.eps, inv_rho);
  const double hi = std::pow(schedule.t_max, inv_rho);
  std::vector<double> times(static_cast<std::size_t>(schedule.n_train));
  const double denom = static_cast<double>(schedule.n_train - 1);
  for (int i = 0; i < schedule.n_train; ++i)
    times[static_cast<std::size_t>(i)] =
        std::pow(lo + (static_cast<double>(i) / denom) * (hi - lo), schedule.rho);
  times.front() = schedule.eps;  // exact endpoints, no pow round-trip error
  times.back() = schedule.t_max;
  return times;
}

SamplingGrid sampling_grid(double t_max, double eps, int n_steps, GridKind kind, double rho) {
  if (n_steps < 1) throw ContractError("sampling_grid: n_steps must be >= 1");
  if (!(eps > 0.0 && eps < t_max)) throw ContractError("sampling_grid: need 0 < eps < t_max");
  SamplingGrid grid;
  grid.times.resize(static_cast<std::size_t>(n_steps) + 1);
  if (kind == GridKind::Uniform) {
    for (int n = 1; n <= n_steps; ++n)
      grid.times[static_cast<std::size_t>(n)] =
          (static_cast<double>(n) / static_cast<double>(n_steps)) * t_max;
    grid.times[0] = eps;  // the formula's t_0=0 is floored at eps
  } else {
    NoiseSchedule s{eps, t_max, rho, n_steps + 1};
    grid.times = karras_times(s);
  }
  return grid;
}

double sample_sigma(const TrainNoiseDist& dist, const NoiseSchedule& schedule, Rng& rng) {
  if (!(dist.log_std >= 0.0)) throw ContractError("sample_sigma: log_std must be >= 0");
  const double sigma = std::exp(dist.log_mean + dist.log_std * rng.normal());
  return std::clamp(sigma, schedule.eps, schedule.t_max);
}

SkipCoeffs skip_coeffs(double t, double sigma_data, double eps) {
  if (t < eps) throw ContractError("skip_coeffs: t below the time floor");
  if (!(sigma_data > 0.0)) throw ContractError("skip_coeffs: sigma_data must be positive");
  const double d = t - eps;
  const double sd2 = sigma_data * sigma_data;
  return {sd2 / (d * d + sd2), sigma_data * d / std::sqrt(sd2 + t * t)};
}

}  // namespace ctp
