#include "latentce/networks.hpp"

#include <vector>

#include "latentce/error.hpp"

namespace latentce::nn {
namespace {

template <typename T>
void init_film(Linear<T>& film) {
  film.weight.zero();
  const int channels = film.out_features / 2;
  for (int c = 0; c < film.out_features; ++c) film.bias[c] = c < channels ? T{1} : T{0};
}

template <typename P>
std::size_t count_params(const P& p) {
  std::size_t n = 0;
  p.visit([&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

template <typename To, typename From, template <typename> class Params>
Params<To> cast_impl(const Params<From>& src) {
  Params<To> dst(src.latent_dim);
  std::vector<BasicTensor<To>*> targets;
  dst.visit([&](const std::string&, BasicTensor<To>& t) { targets.push_back(&t); });
  std::size_t i = 0;
  src.visit([&](const std::string&, const BasicTensor<From>& t) { *targets[i++] = t.template cast<To>(); });
  return dst;
}

template <typename T>
void film_block_backward(const Linear<T>& gen, const typename Linear<T>::Cache& gen_cache,
                         const BasicTensor<T>& a, const BasicTensor<T>& f,
                         const BasicTensor<T>& m, const BasicTensor<T>& dh, Linear<T>& gen_grad,
                         BasicTensor<T>& d_cond, BasicTensor<T>& d_a) {
  BasicTensor<T> dm = silu_backward(m, dh);
  BasicTensor<T> df;
  d_a = film_backward(a, f, dm, df);
  add_inplace(d_cond, gen.backward(gen_cache, df, gen_grad));
}

}  // namespace

template <typename T>
DenoiserParams<T>::DenoiserParams(int d)
    : latent_dim(d),
      time_fc1(kTimeEmbeddingDim, kTimeEmbeddingDim),
      time_fc2(kTimeEmbeddingDim, kTimeEmbeddingDim),
      latent_proj(d, kLatentProjectionDim),
      conv_in(1, 32, 1),
      film_in(kConditioningDim, 64),
      conv_down(32, 64, 2),
      film_down(kConditioningDim, 128),
      conv_mid(64, 64, 1),
      film_mid(kConditioningDim, 128),
      conv_up(64, 32),
      film_up(kConditioningDim, 64),
      conv_out(32, 1, 1) {
  if (d < 1) throw DomainError("latent dimension must be >= 1");
}

template <typename T>
DenoiserParams<T> DenoiserParams<T>::initialized(int d, std::mt19937_64& rng) {
  DenoiserParams p(d);
  kaiming_uniform(p.time_fc1.weight, kTimeEmbeddingDim, rng);
  kaiming_uniform(p.time_fc2.weight, kTimeEmbeddingDim, rng);
  kaiming_uniform(p.latent_proj.weight, d, rng);
  kaiming_uniform(p.conv_in.weight, 9, rng);
  kaiming_uniform(p.conv_down.weight, 32 * 9, rng);
  kaiming_uniform(p.conv_mid.weight, 64 * 9, rng);
  kaiming_uniform(p.conv_up.weight, 64 * 9, rng);
  init_film(p.film_in);
  init_film(p.film_down);
  init_film(p.film_mid);
  init_film(p.film_up);
  return p;
}

template <typename T>
std::size_t DenoiserParams<T>::parameter_count() const {
  return count_params(*this);
}

template <typename T>
BasicTensor<T> conditioning_vector(const DenoiserParams<T>& p, std::span<const int> timesteps,
                                   const BasicTensor<T>& z, int horizon) {
  BasicTensor<T> temb = timestep_embedding<T>(timesteps, horizon, kTimeEmbeddingDim);
  BasicTensor<T> t2 = p.time_fc2.forward(silu(p.time_fc1.forward(temb)));
  return concat_columns(t2, p.latent_proj.forward(z));
}

template <typename T>
BasicTensor<T> denoiser_forward(const DenoiserParams<T>& p, const BasicTensor<T>& x_t,
                                std::span<const int> timesteps, const BasicTensor<T>& z,
                                int horizon, DenoiserTape<T>* tape) {
  if (x_t.rank() != 4 || x_t.dim(1) != 1 || x_t.dim(2) != kImageSize ||
      x_t.dim(3) != kImageSize) {
    throw ShapeError("denoiser input: expected [N,1,32,32], got " + shape_string(x_t.dims()));
  }
  const int n = x_t.dim(0);
  require_dims(z, {n, p.latent_dim}, "denoiser latent");
  if (static_cast<int>(timesteps.size()) != n)
    throw ShapeError("denoiser: one timestep per batch item required");
  for (int t : timesteps) {
    if (t < 1 || t > horizon)
      throw DomainError("denoiser timestep " + std::to_string(t) + " outside [1, " +
                        std::to_string(horizon) + "]");
  }

  DenoiserTape<T> local;
  DenoiserTape<T>& tp = tape ? *tape : local;
  const bool rec = tape != nullptr;

  BasicTensor<T> temb = timestep_embedding<T>(timesteps, horizon, kTimeEmbeddingDim);
  BasicTensor<T> th = p.time_fc1.forward(temb, rec ? &tp.time_fc1 : nullptr);
  BasicTensor<T> t2 = p.time_fc2.forward(silu(th), rec ? &tp.time_fc2 : nullptr);
  BasicTensor<T> zp = p.latent_proj.forward(z, rec ? &tp.latent_proj : nullptr);
  BasicTensor<T> cond_pre = concat_columns(t2, zp);
  BasicTensor<T> cond = silu(cond_pre);

  BasicTensor<T> f_in = p.film_in.forward(cond, rec ? &tp.film_in : nullptr);
  BasicTensor<T> f_down = p.film_down.forward(cond, rec ? &tp.film_down : nullptr);
  BasicTensor<T> f_mid = p.film_mid.forward(cond, rec ? &tp.film_mid : nullptr);
  BasicTensor<T> f_up = p.film_up.forward(cond, rec ? &tp.film_up : nullptr);

  BasicTensor<T> a0 =
      p.conv_in.forward(x_t.reshaped({n, kImageSize, kImageSize, 1}), rec ? &tp.conv_in : nullptr);
  BasicTensor<T> m0 = film(a0, f_in);
  BasicTensor<T> h0 = silu(m0);

  BasicTensor<T> a1 = p.conv_down.forward(h0, rec ? &tp.conv_down : nullptr);
  BasicTensor<T> m1 = film(a1, f_down);
  BasicTensor<T> h1 = silu(m1);

  BasicTensor<T> a2 = p.conv_mid.forward(h1, rec ? &tp.conv_mid : nullptr);
  BasicTensor<T> m2 = film(a2, f_mid);
  BasicTensor<T> h2 = silu(m2);
  add_inplace(h2, h1);

  BasicTensor<T> a3 = p.conv_up.forward(h2, rec ? &tp.conv_up : nullptr);
  add_inplace(a3, h0);
  BasicTensor<T> m3 = film(a3, f_up);
  BasicTensor<T> h3 = silu(m3);

  BasicTensor<T> out = p.conv_out.forward(h3, rec ? &tp.conv_out : nullptr)
                           .reshaped({n, 1, kImageSize, kImageSize});

  if (rec) {
    tp.time_hidden = std::move(th);
    tp.cond_pre = std::move(cond_pre);
    tp.f_in = std::move(f_in);
    tp.f_down = std::move(f_down);
    tp.f_mid = std::move(f_mid);
    tp.f_up = std::move(f_up);
    tp.a0 = std::move(a0);
    tp.a1 = std::move(a1);
    tp.a2 = std::move(a2);
    tp.a3 = std::move(a3);
    tp.m0 = std::move(m0);
    tp.m1 = std::move(m1);
    tp.m2 = std::move(m2);
    tp.m3 = std::move(m3);
    tp.recorded = true;
  }
  return out;
}

template <typename T>
BasicTensor<T> denoiser_backward(const DenoiserParams<T>& p, const DenoiserTape<T>& tp,
                                 const BasicTensor<T>& d_eps, DenoiserParams<T>& grad) {
  if (!tp.recorded) throw StateError("denoiser backward called before a recorded forward pass");
  BasicTensor<T> d_cond(tp.cond_pre.dims());

  require_dims(d_eps, {tp.cond_pre.dim(0), 1, kImageSize, kImageSize}, "denoiser upstream gradient");
  BasicTensor<T> d_h3 = p.conv_out.backward(
      tp.conv_out, d_eps.reshaped({d_eps.dim(0), kImageSize, kImageSize, 1}), grad.conv_out);
  BasicTensor<T> d_a3;
  film_block_backward(p.film_up, tp.film_up, tp.a3, tp.f_up, tp.m3, d_h3, grad.film_up, d_cond,
                      d_a3);
  BasicTensor<T> d_h0 = d_a3;  // skip connection
  BasicTensor<T> d_h2 = p.conv_up.backward(tp.conv_up, d_a3, grad.conv_up);

  BasicTensor<T> d_a2;
  film_block_backward(p.film_mid, tp.film_mid, tp.a2, tp.f_mid, tp.m2, d_h2, grad.film_mid,
                      d_cond, d_a2);
  BasicTensor<T> d_h1 = std::move(d_h2);  // residual
  add_inplace(d_h1, p.conv_mid.backward(tp.conv_mid, d_a2, grad.conv_mid));

  BasicTensor<T> d_a1;
  film_block_backward(p.film_down, tp.film_down, tp.a1, tp.f_down, tp.m1, d_h1, grad.film_down,
                      d_cond, d_a1);
  add_inplace(d_h0, p.conv_down.backward(tp.conv_down, d_a1, grad.conv_down));

  BasicTensor<T> d_a0;
  film_block_backward(p.film_in, tp.film_in, tp.a0, tp.f_in, tp.m0, d_h0, grad.film_in, d_cond,
                      d_a0);
  p.conv_in.backward(tp.conv_in, d_a0, grad.conv_in, false);

  BasicTensor<T> d_cond_pre = silu_backward(tp.cond_pre, d_cond);
  BasicTensor<T> d_t2, d_zp;
  split_columns(d_cond_pre, kTimeEmbeddingDim, d_t2, d_zp);
  BasicTensor<T> dz = p.latent_proj.backward(tp.latent_proj, d_zp, grad.latent_proj);
  BasicTensor<T> d_th =
      silu_backward(tp.time_hidden, p.time_fc2.backward(tp.time_fc2, d_t2, grad.time_fc2));
  p.time_fc1.backward(tp.time_fc1, d_th, grad.time_fc1);
  return dz;
}

template <typename T>
EncoderParams<T>::EncoderParams(int d)
    : latent_dim(d), conv1(1, 16, 2), conv2(16, 32, 2), conv3(32, 64, 2), fc(64 * 4 * 4, d) {
  if (d < 1) throw DomainError("latent dimension must be >= 1");
}

template <typename T>
EncoderParams<T> EncoderParams<T>::initialized(int d, std::mt19937_64& rng) {
  EncoderParams p(d);
  kaiming_uniform(p.conv1.weight, 9, rng);
  kaiming_uniform(p.conv2.weight, 16 * 9, rng);
  kaiming_uniform(p.conv3.weight, 32 * 9, rng);
  kaiming_uniform(p.fc.weight, 64 * 4 * 4, rng);
  return p;
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  return count_params(*this);
}

template <typename T>
BasicTensor<T> encoder_forward(const EncoderParams<T>& p, const BasicTensor<T>& x0,
                               EncoderTape<T>* tape) {
  if (x0.rank() != 4 || x0.dim(1) != 1 || x0.dim(2) != kImageSize || x0.dim(3) != kImageSize) {
    throw ShapeError("encoder input: expected [N,1,32,32], got " + shape_string(x0.dims()));
  }
  const int n = x0.dim(0);
  EncoderTape<T> local;
  EncoderTape<T>& tp = tape ? *tape : local;
  const bool rec = tape != nullptr;

  BasicTensor<T> p1 =
      p.conv1.forward(x0.reshaped({n, kImageSize, kImageSize, 1}), rec ? &tp.conv1 : nullptr);
  BasicTensor<T> p2 = p.conv2.forward(silu(p1), rec ? &tp.conv2 : nullptr);
  BasicTensor<T> p3 = p.conv3.forward(silu(p2), rec ? &tp.conv3 : nullptr);
  BasicTensor<T> flat = silu(p3).reshaped({n, 64 * 4 * 4});
  BasicTensor<T> z = p.fc.forward(flat, rec ? &tp.fc : nullptr);
  if (rec) {
    tp.p1 = std::move(p1);
    tp.p2 = std::move(p2);
    tp.p3 = std::move(p3);
    tp.recorded = true;
  }
  return z;
}

template <typename T>
void encoder_backward(const EncoderParams<T>& p, const EncoderTape<T>& tp,
                      const BasicTensor<T>& dz, EncoderParams<T>& grad) {
  if (!tp.recorded) throw StateError("encoder backward called before a recorded forward pass");
  BasicTensor<T> d_flat = p.fc.backward(tp.fc, dz, grad.fc);
  BasicTensor<T> d3 = silu_backward(tp.p3, std::move(d_flat).reshaped(tp.p3.dims()));
  BasicTensor<T> d2 = silu_backward(tp.p2, p.conv3.backward(tp.conv3, d3, grad.conv3));
  BasicTensor<T> d1 = silu_backward(tp.p1, p.conv2.backward(tp.conv2, d2, grad.conv2));
  p.conv1.backward(tp.conv1, d1, grad.conv1, false);
}

template <typename To, typename From>
DenoiserParams<To> cast_params(const DenoiserParams<From>& p) {
  return cast_impl<To, From, DenoiserParams>(p);
}

template <typename To, typename From>
EncoderParams<To> cast_params(const EncoderParams<From>& p) {
  return cast_impl<To, From, EncoderParams>(p);
}

#define LATENTCE_INSTANTIATE(T)                                                                \
  template struct DenoiserParams<T>;                                                           \
  template struct EncoderParams<T>;                                                            \
  template BasicTensor<T> conditioning_vector(const DenoiserParams<T>&, std::span<const int>, \
                                              const BasicTensor<T>&, int);                     \
  template BasicTensor<T> denoiser_forward(const DenoiserParams<T>&, const BasicTensor<T>&,    \
                                           std::span<const int>, const BasicTensor<T>&, int,   \
                                           DenoiserTape<T>*);                                  \
  template BasicTensor<T> denoiser_backward(const DenoiserParams<T>&, const DenoiserTape<T>&,  \
                                            const BasicTensor<T>&, DenoiserParams<T>&);        \
  template BasicTensor<T> encoder_forward(const EncoderParams<T>&, const BasicTensor<T>&,      \
                                          EncoderTape<T>*);                                    \
  template void encoder_backward(const EncoderParams<T>&, const EncoderTape<T>&,               \
                                 const BasicTensor<T>&, EncoderParams<T>&);

LATENTCE_INSTANTIATE(float)
LATENTCE_INSTANTIATE(double)
#undef LATENTCE_INSTANTIATE

template DenoiserParams<double> cast_params(const DenoiserParams<float>&);
template DenoiserParams<float> cast_params(const DenoiserParams<double>&);
template EncoderParams<double> cast_params(const EncoderParams<float>&);
template EncoderParams<float> cast_params(const EncoderParams<double>&);

}  // namespace latentce::nn
