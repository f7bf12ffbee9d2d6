#include "latentce/adam.hpp"

#include <cmath>

#include "latentce/error.hpp"

namespace latentce::nn {

void adam_step(std::span<const ParamSlot> slots, AdamState& state, const AdamOptions& opt) {
  if (!(opt.lr > 0.0) || !(opt.beta1 >= 0.0 && opt.beta1 < 1.0) ||
      !(opt.beta2 >= 0.0 && opt.beta2 < 1.0) || !(opt.eps > 0.0))
    throw DomainError("adam: invalid hyperparameters");
  for (const auto& s : slots) {
    if (!s.value || !s.grad) throw StateError("adam: slot '" + s.name + "' is unbound");
    if (!s.value->same_shape(*s.grad))
      throw ShapeError("adam: gradient shape mismatch for '" + s.name + "'");
    for (float g : s.grad->values())
      if (!std::isfinite(g)) throw OptimizerError(s.name, "non-finite gradient");
  }
  if (state.m.empty()) {
    for (const auto& s : slots) {
      state.m.emplace_back(s.value->dims());
      state.v.emplace_back(s.value->dims());
    }
  }
  if (state.m.size() != slots.size()) throw StateError("adam: state does not match parameter list");

  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const float b1 = static_cast<float>(opt.beta1), b2 = static_cast<float>(opt.beta2);
  const float step = static_cast<float>(opt.lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(opt.eps);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    float* p = slots[k].value->data();
    const float* g = slots[k].grad->data();
    float* m = state.m[k].data();
    float* v = state.v[k].data();
    const std::size_t n = slots[k].value->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

}  // namespace latentce::nn
