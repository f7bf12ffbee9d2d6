#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "latentce/diffusion.hpp"
#include "latentce/image.hpp"
#include "latentce/networks.hpp"

namespace latentce {

inline constexpr int kDefaultLatentDim = 32;
inline constexpr int kDefaultHorizon = 1000;
inline constexpr int kEncodeSteps = 250;
inline constexpr int kDecodeSteps = 100;

// Pixel [0,1] <-> model [-1,1].
inline float to_model(float pixel) { return 2.0f * pixel - 1.0f; }
inline float from_model(float v) { return 0.5f * (v + 1.0f); }

struct DaeModel {
  int latent_dim = 0;
  nn::EncoderParams<float> encoder;
  nn::DenoiserParams<float> denoiser;
  NoiseSchedule schedule;

  static DaeModel create(int latent_dim, int horizon, std::mt19937_64& rng);
  // Throws ConfigError when encoder, denoiser and schedule disagree.
  void validate() const;
};

struct TrainConfig {
  long long total_steps = 20000;
  int batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 42;
  long long checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;
  int latent_dim = kDefaultLatentDim;
  int horizon = kDefaultHorizon;
  long long trace_every = 100;
};

// Loss at `step` plus the mean over the block of steps it opens.
struct LossPoint {
  long long step = 0;
  double loss = 0.0;
  double window_mean = 0.0;
};

struct TrainResult {
  DaeModel model;
  std::vector<LossPoint> trace;
  double seconds = 0.0;      // wall clock
  double cpu_seconds = 0.0;  // process CPU time
};

using ProgressFn = std::function<void(const LossPoint&)>;

// Joint encoder/denoiser training on the noise-prediction objective.
TrainResult train(std::span<const Image* const> images, const TrainConfig& config,
                  const ProgressFn& progress = {});

// Loss and parameter gradients of one batch, for inspection and tests.
struct StepGradients {
  double loss = 0.0;
  nn::EncoderParams<float> encoder;
  nn::DenoiserParams<float> denoiser;
};
StepGradients compute_gradients(const DaeModel& model, const nn::Tensor& x0,
                                std::span<const int> timesteps, const nn::Tensor& eps);

// [N,1,32,32] batch in model units.
nn::Tensor images_to_batch(std::span<const Image* const> images);
nn::Tensor image_to_batch(const Image& image);
// Clamps to [-1,1] and maps back to pixels.
std::vector<Image> batch_to_images(const nn::Tensor& batch);

// Noise predictor bound to latents z [N,D].
EpsFn make_eps_fn(const DaeModel& model, const nn::Tensor& z);

// z_sem [N,D] for x0 [N,1,32,32] in model units.
nn::Tensor encode_semantic(const DaeModel& model, const nn::Tensor& x0);
// x_T by DDIM inversion conditioned on z.
nn::Tensor encode_stochastic(const DaeModel& model, const nn::Tensor& x0, const nn::Tensor& z,
                             int steps = kEncodeSteps);
// DDIM generation; result in model units, unclamped.
nn::Tensor decode_batch(const DaeModel& model, const nn::Tensor& z, const nn::Tensor& x_T,
                        int steps = kDecodeSteps);

struct Encoding {
  nn::Tensor z;    // [N,D]
  nn::Tensor x_T;  // [N,1,32,32]
};
Encoding encode(const DaeModel& model, std::span<const Image* const> images, int steps = kEncodeSteps);
std::vector<Image> decode(const DaeModel& model, const nn::Tensor& z, const nn::Tensor& x_T,
                          int steps = kDecodeSteps);

// Checkpoint: parameter records followed by a "schedule" record.
void save_checkpoint(const DaeModel& model, const std::filesystem::path& path);
DaeModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const DaeModel& model);

struct LatentRecord {
  int id = 0;
  std::vector<float> z;
  bool operator==(const LatentRecord&) const = default;
};

// z_sem for each image, tagged with the given ids.
std::vector<LatentRecord> embed_images(const DaeModel& model, std::span<const Image* const> images,
                                       std::span<const int> ids);

// "ZSEM", u32 count, u32 D, then per record u32 id and D f32 values.
void write_latent_cache(const std::filesystem::path& path, const std::vector<LatentRecord>& records);
std::vector<LatentRecord> read_latent_cache(const std::filesystem::path& path);

}  // namespace latentce
