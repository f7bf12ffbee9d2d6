#pragma once

#include <span>
#include <string>
#include <vector>

#include "latentce/tensor.hpp"

namespace latentce::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One trainable tensor and its gradient.
struct ParamSlot {
  std::string name;
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
};

struct AdamState {
  long long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Bias-corrected Adam update. Every gradient is checked before any parameter
// moves; a non-finite entry raises OptimizerError naming the parameter.
void adam_step(std::span<const ParamSlot> slots, AdamState& state, const AdamOptions& opt);

// Pairs the parameters of `params` with the same-named tensors of `grads`.
template <typename Params>
void append_slots(Params& params, const Params& grads, std::vector<ParamSlot>& out) {
  std::vector<const Tensor*> g;
  grads.visit([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  std::size_t i = 0;
  params.visit([&](const std::string& name, Tensor& t) { out.push_back({name, &t, g[i++]}); });
}

}  // namespace latentce::nn
