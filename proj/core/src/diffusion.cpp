#include "latentce/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "latentce/error.hpp"

namespace latentce {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw DomainError("schedule length must be at least 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw DomainError("schedule requires 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(T);
  s.alpha_bars.resize(T + 1);
  s.alpha_bars[0] = 1.0;
  for (int i = 0; i < T; ++i) {
    s.betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    s.alpha_bars[i + 1] = s.alpha_bars[i] * (1.0 - s.betas[i]);
  }
  return s;
}

StepGrid make_grid(int T, int S) {
  if (T < 1 || S < 1) throw DomainError("step grid needs T >= 1 and S >= 1");
  StepGrid g;
  for (int i = 0; i <= S; ++i) {
    const int t = static_cast<int>(std::llround(static_cast<double>(i) * T / S));
    if (g.steps.empty() || g.steps.back() != t) g.steps.push_back(t);
  }
  return g;
}

void check_grid(const StepGrid& grid, const NoiseSchedule& sched) {
  if (grid.steps.size() < 2) throw DomainError("step grid is empty");
  if (grid.steps.front() != 0) throw DomainError("step grid must start at 0");
  for (std::size_t i = 1; i < grid.steps.size(); ++i)
    if (grid.steps[i] <= grid.steps[i - 1]) throw DomainError("step grid must be strictly increasing");
  if (grid.steps.back() > sched.T) throw DomainError("step grid exceeds schedule length");
}

nn::Tensor q_sample(const nn::Tensor& x0, int t, const nn::Tensor& eps, const NoiseSchedule& sched) {
  if (!x0.same_shape(eps))
    throw ShapeError("q_sample: noise " + nn::shape_string(eps.dims()) + " vs image " +
                     nn::shape_string(x0.dims()));
  if (t < 1 || t > sched.T) throw DomainError("q_sample: timestep out of range");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  nn::Tensor out(x0.dims());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(a * x0[i] + s * eps[i]);
  return out;
}

namespace {

// One DDIM move of `state` from timestep `from` to `to` using eps at `from`.
void ddim_move(std::vector<double>& state, const nn::Tensor& eps_hat, double ab_from, double ab_to) {
  if (eps_hat.size() != state.size()) throw ShapeError("denoiser returned a mis-shaped prediction");
  const double sa = std::sqrt(ab_from), sn = std::sqrt(1.0 - ab_from);
  const double ta = std::sqrt(ab_to), tn = std::sqrt(1.0 - ab_to);
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double e = eps_hat[i];
    const double x0 = (state[i] - sn * e) / sa;
    state[i] = ta * x0 + tn * e;
  }
}

nn::Tensor to_tensor(const std::vector<int>& dims, const std::vector<double>& state) {
  nn::Tensor out(dims);
  for (std::size_t i = 0; i < state.size(); ++i) out[i] = static_cast<float>(state[i]);
  return out;
}

}  // namespace

nn::Tensor ddim_decode(const nn::Tensor& x_T, const StepGrid& grid, const NoiseSchedule& sched,
                       const EpsFn& eps) {
  check_grid(grid, sched);
  std::vector<double> state(x_T.values().begin(), x_T.values().end());
  nn::Tensor current = x_T;
  for (int i = grid.size(); i >= 1; --i) {
    const int t = grid.steps[i], t_prev = grid.steps[i - 1];
    ddim_move(state, eps(current, t), sched.alpha_bar(t), sched.alpha_bar(t_prev));
    current = to_tensor(x_T.dims(), state);
  }
  return current;
}

nn::Tensor ddim_encode(const nn::Tensor& x_0, const StepGrid& grid, const NoiseSchedule& sched,
                       const EpsFn& eps) {
  check_grid(grid, sched);
  std::vector<double> state(x_0.values().begin(), x_0.values().end());
  nn::Tensor current = x_0;
  for (int i = 0; i < grid.size(); ++i) {
    const int t = grid.steps[i], t_next = grid.steps[i + 1];
    ddim_move(state, eps(current, std::max(t, 1)), sched.alpha_bar(t), sched.alpha_bar(t_next));
    current = to_tensor(x_0.dims(), state);
  }
  return current;
}

}  // namespace latentce
