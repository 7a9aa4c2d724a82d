#pragma once

#include <vector>

#include "ctp/rng.hpp"

namespace ctp {

// Warped training discretization of diffusion time. t_1 = eps and
// t_{n_train} = t_max exactly; rho > 1 concentrates points near eps.
struct NoiseSchedule {
  double eps = 0.002;
  double t_max = 80.0;
  double rho = 7.0;
  int n_train = 40;
};

std::vector<double> karras_times(const NoiseSchedule& schedule);

enum class GridKind { Uniform, Karras };

// Inference-time grid: times[0] = eps, times[n] = (n/steps)*t_max for n>=1
// in Uniform mode; Karras mode reuses the warped spacing.
struct SamplingGrid {
  std::vector<double> times;  // strictly increasing, times.front()=eps
  int steps() const { return static_cast<int>(times.size()) - 1; }
};

SamplingGrid sampling_grid(double t_max, double eps, int n_steps,
                           GridKind kind = GridKind::Uniform, double rho = 7.0);

// Log-normal over noise level sigma, clamped to the schedule's interval.
struct TrainNoiseDist {
  double log_mean = -1.2;
  double log_std = 1.2;
};

double sample_sigma(const TrainNoiseDist& dist, const NoiseSchedule& schedule, Rng& rng);

// Denoiser input/output mixing weights. c_skip(eps)=1 and c_out(eps)=0 so
// the denoiser reproduces clean data exactly at the time floor.
struct SkipCoeffs {
  double c_skip;
  double c_out;
};

SkipCoeffs skip_coeffs(double t, double sigma_data, double eps);

}  // namespace ctp
