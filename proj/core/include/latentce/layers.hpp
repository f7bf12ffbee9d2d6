#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "latentce/tensor.hpp"

namespace latentce::nn {

// Activations are channels-last: [N, H, W, C].

// 3x3 convolution with zero padding 1.
template <typename T>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  BasicTensor<T> weight;  // [out, 3, 3, in]
  BasicTensor<T> bias;    // [out]

  struct Cache {
    BasicTensor<T> input;
    bool recorded = false;
  };

  Conv2d() = default;
  Conv2d(int in, int out, int stride);

  int output_extent(int extent) const { return (extent - 1) / stride + 1; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into `grad` and returns d(loss)/d(input),
  // or an empty tensor when `input_grad` is false.
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& dy, Conv2d& grad,
                          bool input_grad = true) const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Nearest-neighbour x2 upsampling followed by a 3x3 convolution (zero pad 1).
// Evaluated as four 2x2 phase convolutions on the low-resolution input, which
// is exact and avoids materialising the upsampled tensor.
template <typename T>
struct UpsampleConv2d {
  int in_channels = 0;
  int out_channels = 0;
  BasicTensor<T> weight;  // [out, 3, 3, in], applied at the upsampled resolution
  BasicTensor<T> bias;    // [out]

  struct Cache {
    BasicTensor<T> input;
    bool recorded = false;
  };

  UpsampleConv2d() = default;
  UpsampleConv2d(int in, int out);

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache = nullptr) const;
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& dy,
                          UpsampleConv2d& grad) const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Fully connected layer over [N, in] rows.
template <typename T>
struct Linear {
  int in_features = 0;
  int out_features = 0;
  BasicTensor<T> weight;  // [out, in]
  BasicTensor<T> bias;    // [out]

  struct Cache {
    BasicTensor<T> input;
    bool recorded = false;
  };

  Linear() = default;
  Linear(int in, int out);

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache = nullptr) const;
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& dy, Linear& grad) const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> silu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

// Feature-wise affine modulation: y[n,:,:,c] = x[n,:,:,c] * scale[n,c] + shift[n,c].
// `film` is [N, 2C]: first C columns are scales, last C are shifts.
template <typename T>
BasicTensor<T> film(const BasicTensor<T>& x, const BasicTensor<T>& film);
// Returns dx; writes d(film) into `dfilm` (same dims as film).
template <typename T>
BasicTensor<T> film_backward(const BasicTensor<T>& x, const BasicTensor<T>& film,
                             const BasicTensor<T>& dy, BasicTensor<T>& dfilm);

template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& dy);

// Concatenates [N, a] and [N, b] into [N, a+b].
template <typename T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
void split_columns(const BasicTensor<T>& ab, int a_cols, BasicTensor<T>& a, BasicTensor<T>& b);

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);

// Sinusoidal embedding of integer timesteps, [N, dim]. Timesteps are rescaled
// to a 1000-step horizon so the embedding does not depend on T otherwise.
template <typename T>
BasicTensor<T> timestep_embedding(std::span<const int> timesteps, int horizon, int dim);

// Kaiming-uniform fill (bound sqrt(6 / fan_in)).
template <typename T>
void kaiming_uniform(BasicTensor<T>& w, int fan_in, std::mt19937_64& rng);

}  // namespace latentce::nn
