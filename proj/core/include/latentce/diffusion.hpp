#pragma once

#include <functional>
#include <random>
#include <vector>

#include "latentce/tensor.hpp"

namespace latentce {

// Linear beta schedule. Index t runs 1..T; alpha_bar(0) == 1.
struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;       // betas[t-1]
  std::vector<double> alpha_bars;  // alpha_bars[t], size T+1

  double beta(int t) const { return betas.at(t - 1); }
  double alpha_bar(int t) const { return alpha_bars.at(t); }
  bool operator==(const NoiseSchedule&) const = default;
};

NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

// tau_0 = 0 < tau_1 < ... < tau_S = T.
struct StepGrid {
  std::vector<int> steps;
  int size() const { return static_cast<int>(steps.size()) - 1; }
};

// Evenly spaced timesteps round(i*T/S), deduplicated.
StepGrid make_grid(int T, int S);
// Validates ordering and bounds against the schedule.
void check_grid(const StepGrid& grid, const NoiseSchedule& sched);

// x_t = sqrt(ab_t) x_0 + sqrt(1 - ab_t) eps.
nn::Tensor q_sample(const nn::Tensor& x0, int t, const nn::Tensor& eps, const NoiseSchedule& sched);

// Noise prediction for a batch sharing one timestep; the conditioning is bound
// in the closure.
using EpsFn = std::function<nn::Tensor(const nn::Tensor& x_t, int t)>;

// Deterministic DDIM from tau_S down to 0. The state is kept in 64-bit between
// steps; no clamping is applied.
nn::Tensor ddim_decode(const nn::Tensor& x_T, const StepGrid& grid, const NoiseSchedule& sched,
                       const EpsFn& eps);

// The same recurrence run forward in time from 0 up to tau_S. The model is
// queried at timestep max(t, 1).
nn::Tensor ddim_encode(const nn::Tensor& x_0, const StepGrid& grid, const NoiseSchedule& sched,
                       const EpsFn& eps);

}  // namespace latentce
