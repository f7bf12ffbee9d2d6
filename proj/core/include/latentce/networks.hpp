#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>

#include "latentce/layers.hpp"
#include "latentce/tensor.hpp"

namespace latentce::nn {

inline constexpr int kImageSize = 32;
inline constexpr int kTimeEmbeddingDim = 64;
inline constexpr int kLatentProjectionDim = 64;
inline constexpr int kConditioningDim = kTimeEmbeddingDim + kLatentProjectionDim;

// Two-level U-Net predicting the noise of x_t, conditioned on the timestep and
// the semantic latent through per-block FiLM generators.
template <typename T>
struct DenoiserParams {
  int latent_dim = 0;
  Linear<T> time_fc1;
  Linear<T> time_fc2;
  Linear<T> latent_proj;
  Conv2d<T> conv_in;    // 1 -> 32 @ 32x32
  Linear<T> film_in;    // cond -> 2*32
  Conv2d<T> conv_down;  // 32 -> 64, stride 2
  Linear<T> film_down;
  Conv2d<T> conv_mid;  // 64 -> 64 @ 16x16, residual
  Linear<T> film_mid;
  UpsampleConv2d<T> conv_up;  // nearest x2 then 3x3, 64 -> 32, plus skip from conv_in
  Linear<T> film_up;
  Conv2d<T> conv_out;  // 32 -> 1

  DenoiserParams() = default;
  // All-zero parameters with the right shapes.
  explicit DenoiserParams(int latent_dim);

  // Kaiming-uniform convs and linears, identity FiLM (scale 1, shift 0) and a
  // zero output convolution.
  static DenoiserParams initialized(int latent_dim, std::mt19937_64& rng);

  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    s.time_fc1.visit("denoiser.time_fc1", f);
    s.time_fc2.visit("denoiser.time_fc2", f);
    s.latent_proj.visit("denoiser.latent_proj", f);
    s.conv_in.visit("denoiser.conv_in", f);
    s.film_in.visit("denoiser.film_in", f);
    s.conv_down.visit("denoiser.conv_down", f);
    s.film_down.visit("denoiser.film_down", f);
    s.conv_mid.visit("denoiser.conv_mid", f);
    s.film_mid.visit("denoiser.film_mid", f);
    s.conv_up.visit("denoiser.conv_up", f);
    s.film_up.visit("denoiser.film_up", f);
    s.conv_out.visit("denoiser.conv_out", f);
  }
};

template <typename T>
struct DenoiserTape {
  typename Linear<T>::Cache time_fc1, time_fc2, latent_proj;
  typename Linear<T>::Cache film_in, film_down, film_mid, film_up;
  typename Conv2d<T>::Cache conv_in, conv_down, conv_mid, conv_out;
  typename UpsampleConv2d<T>::Cache conv_up;
  BasicTensor<T> time_hidden;  // pre-activation of the time MLP
  BasicTensor<T> cond_pre;     // pre-activation conditioning vector
  BasicTensor<T> f_in, f_down, f_mid, f_up;
  BasicTensor<T> a0, a1, a2, a3;  // FiLM inputs
  BasicTensor<T> m0, m1, m2, m3;  // FiLM outputs (pre-activation)
  bool recorded = false;
};

// Conditioning vector [N, 128]: time MLP output followed by latent projection.
// This is the pre-activation form fed (after SiLU) to every FiLM generator.
template <typename T>
BasicTensor<T> conditioning_vector(const DenoiserParams<T>& p, std::span<const int> timesteps,
                                   const BasicTensor<T>& z, int horizon);

// Predicts eps for x_t [N,1,32,32] at integer timesteps (one per item, each in
// [1, horizon]) given z [N, D].
template <typename T>
BasicTensor<T> denoiser_forward(const DenoiserParams<T>& p, const BasicTensor<T>& x_t,
                                std::span<const int> timesteps, const BasicTensor<T>& z,
                                int horizon, DenoiserTape<T>* tape = nullptr);

// Accumulates parameter gradients into `grad`; returns d(loss)/dz.
template <typename T>
BasicTensor<T> denoiser_backward(const DenoiserParams<T>& p, const DenoiserTape<T>& tape,
                                 const BasicTensor<T>& d_eps, DenoiserParams<T>& grad);

// Semantic encoder: three stride-2 convs then a linear map to D.
template <typename T>
struct EncoderParams {
  int latent_dim = 0;
  Conv2d<T> conv1;  // 1 -> 16, 32 -> 16
  Conv2d<T> conv2;  // 16 -> 32, 16 -> 8
  Conv2d<T> conv3;  // 32 -> 64, 8 -> 4
  Linear<T> fc;     // 1024 -> D

  EncoderParams() = default;
  explicit EncoderParams(int latent_dim);
  static EncoderParams initialized(int latent_dim, std::mt19937_64& rng);

  template <typename F>
  void visit(F&& f) {
    visit_all(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_all(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit_all(Self& s, F& f) {
    s.conv1.visit("encoder.conv1", f);
    s.conv2.visit("encoder.conv2", f);
    s.conv3.visit("encoder.conv3", f);
    s.fc.visit("encoder.fc", f);
  }
};

template <typename T>
struct EncoderTape {
  typename Conv2d<T>::Cache conv1, conv2, conv3;
  typename Linear<T>::Cache fc;
  BasicTensor<T> p1, p2, p3;
  bool recorded = false;
};

// x_0 [N,1,32,32] in [-1,1] -> z [N, D].
template <typename T>
BasicTensor<T> encoder_forward(const EncoderParams<T>& p, const BasicTensor<T>& x0,
                               EncoderTape<T>* tape = nullptr);

template <typename T>
void encoder_backward(const EncoderParams<T>& p, const EncoderTape<T>& tape,
                      const BasicTensor<T>& dz, EncoderParams<T>& grad);

// Converts every parameter tensor to another scalar type.
template <typename To, typename From>
DenoiserParams<To> cast_params(const DenoiserParams<From>& p);
template <typename To, typename From>
EncoderParams<To> cast_params(const EncoderParams<From>& p);

}  // namespace latentce::nn
