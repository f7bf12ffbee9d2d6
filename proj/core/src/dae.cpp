#include "latentce/dae.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <cstring>
#include <map>

#include "latentce/adam.hpp"
#include "latentce/checkpoint.hpp"
#include "latentce/error.hpp"

namespace latentce {

using nn::Tensor;

namespace {

// Denoiser evaluation is chunked so memory stays bounded for large batches.
constexpr int kEvalChunk = 64;

Tensor rows(const Tensor& t, int begin, int end) {
  std::vector<int> dims = t.dims();
  const std::size_t stride = t.size() / dims[0];
  dims[0] = end - begin;
  return Tensor(dims, std::vector<float>(t.data() + begin * stride, t.data() + end * stride));
}

void put_rows(Tensor& dst, int begin, const Tensor& src) {
  const std::size_t stride = dst.size() / dst.dim(0);
  std::copy(src.data(), src.data() + src.size(), dst.data() + begin * stride);
}

template <typename Params>
void zero_params(Params& p) {
  p.visit([](const std::string&, Tensor& t) { t.zero(); });
}

}  // namespace

DaeModel DaeModel::create(int latent_dim, int horizon, std::mt19937_64& rng) {
  DaeModel m;
  m.latent_dim = latent_dim;
  m.encoder = nn::EncoderParams<float>::initialized(latent_dim, rng);
  m.denoiser = nn::DenoiserParams<float>::initialized(latent_dim, rng);
  m.schedule = make_schedule(horizon);
  return m;
}

void DaeModel::validate() const {
  if (encoder.latent_dim != latent_dim || denoiser.latent_dim != latent_dim ||
      encoder.fc.out_features != latent_dim || denoiser.latent_proj.in_features != latent_dim)
    throw ConfigError("encoder output and denoiser conditioning dimensions disagree");
  if (schedule.T < 1 || schedule.alpha_bars.size() != static_cast<std::size_t>(schedule.T) + 1)
    throw ConfigError("model schedule is not initialised");
}

Tensor images_to_batch(std::span<const Image* const> images) {
  const int n = static_cast<int>(images.size());
  Tensor out({n, 1, nn::kImageSize, nn::kImageSize});
  constexpr std::size_t px = nn::kImageSize * nn::kImageSize;
  for (int i = 0; i < n; ++i) {
    const Image& img = *images[i];
    if (img.height != nn::kImageSize || img.width != nn::kImageSize)
      throw ShapeError("model images must be 32x32");
    for (std::size_t k = 0; k < px; ++k) out[i * px + k] = to_model(img.pixels[k]);
  }
  return out;
}

Tensor image_to_batch(const Image& image) {
  const Image* p = &image;
  return images_to_batch(std::span<const Image* const>(&p, 1));
}

std::vector<Image> batch_to_images(const Tensor& batch) {
  nn::require_dims(batch, {batch.dim(0), 1, nn::kImageSize, nn::kImageSize}, "image batch");
  constexpr std::size_t px = nn::kImageSize * nn::kImageSize;
  std::vector<Image> out;
  for (int i = 0; i < batch.dim(0); ++i) {
    Image img(nn::kImageSize, nn::kImageSize);
    for (std::size_t k = 0; k < px; ++k)
      img.pixels[k] = from_model(std::clamp(batch[i * px + k], -1.0f, 1.0f));
    out.push_back(std::move(img));
  }
  return out;
}

EpsFn make_eps_fn(const DaeModel& model, const Tensor& z) {
  return [&model, z](const Tensor& x, int t) {
    const int n = x.dim(0);
    if (z.dim(0) != n) throw ShapeError("latent batch does not match image batch");
    Tensor out(x.dims());
    for (int b = 0; b < n; b += kEvalChunk) {
      const int e = std::min(n, b + kEvalChunk);
      const std::vector<int> ts(e - b, t);
      put_rows(out, b,
               nn::denoiser_forward(model.denoiser, rows(x, b, e), ts, rows(z, b, e), model.schedule.T));
    }
    return out;
  };
}

Tensor encode_semantic(const DaeModel& model, const Tensor& x0) {
  model.validate();
  const int n = x0.dim(0);
  Tensor z({n, model.latent_dim});
  for (int b = 0; b < n; b += kEvalChunk) {
    const int e = std::min(n, b + kEvalChunk);
    put_rows(z, b, nn::encoder_forward(model.encoder, rows(x0, b, e)));
  }
  return z;
}

Tensor encode_stochastic(const DaeModel& model, const Tensor& x0, const Tensor& z, int steps) {
  model.validate();
  return ddim_encode(x0, make_grid(model.schedule.T, steps), model.schedule, make_eps_fn(model, z));
}

Tensor decode_batch(const DaeModel& model, const Tensor& z, const Tensor& x_T, int steps) {
  model.validate();
  nn::require_dims(z, {x_T.dim(0), model.latent_dim}, "decode latents");
  return ddim_decode(x_T, make_grid(model.schedule.T, steps), model.schedule, make_eps_fn(model, z));
}

Encoding encode(const DaeModel& model, std::span<const Image* const> images, int steps) {
  Encoding enc;
  const Tensor x0 = images_to_batch(images);
  enc.z = encode_semantic(model, x0);
  enc.x_T = encode_stochastic(model, x0, enc.z, steps);
  return enc;
}

std::vector<Image> decode(const DaeModel& model, const Tensor& z, const Tensor& x_T, int steps) {
  return batch_to_images(decode_batch(model, z, x_T, steps));
}

namespace {

// Forward and backward pass of the noise-prediction loss on one batch.
// Gradients are accumulated into `genc` and `gden`; returns the loss.
double accumulate_gradients(const DaeModel& model, const Tensor& x0, std::span<const int> timesteps,
                            const Tensor& eps, nn::EncoderParams<float>& genc,
                            nn::DenoiserParams<float>& gden) {
  nn::require_dims(eps, x0.dims(), "training noise");
  if (timesteps.size() != static_cast<std::size_t>(x0.dim(0)))
    throw ShapeError("one timestep per training image required");
  nn::EncoderTape<float> etape;
  nn::DenoiserTape<float> dtape;
  const Tensor z = nn::encoder_forward(model.encoder, x0, &etape);
  Tensor x_t(x0.dims());
  const std::size_t px = x0.size() / x0.dim(0);
  for (int i = 0; i < x0.dim(0); ++i) {
    const int t = timesteps[i];
    if (t < 1 || t > model.schedule.T) throw DomainError("training timestep out of range");
    const double a = std::sqrt(model.schedule.alpha_bar(t));
    const double s = std::sqrt(1.0 - model.schedule.alpha_bar(t));
    for (std::size_t k = i * px; k < (i + 1) * px; ++k)
      x_t[k] = static_cast<float>(a * x0[k] + s * eps[k]);
  }
  const Tensor eps_hat = nn::denoiser_forward(model.denoiser, x_t, timesteps, z, model.schedule.T, &dtape);
  Tensor d_eps(eps_hat.dims());
  const double scale = 2.0 / static_cast<double>(eps_hat.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < eps_hat.size(); ++k) {
    const double r = static_cast<double>(eps_hat[k]) - eps[k];
    loss += r * r;
    d_eps[k] = static_cast<float>(scale * r);
  }
  const Tensor dz = nn::denoiser_backward(model.denoiser, dtape, d_eps, gden);
  nn::encoder_backward(model.encoder, etape, dz, genc);
  return loss / static_cast<double>(eps_hat.size());
}

}  // namespace

StepGradients compute_gradients(const DaeModel& model, const Tensor& x0,
                                std::span<const int> timesteps, const Tensor& eps) {
  model.validate();
  StepGradients g{0.0, nn::EncoderParams<float>(model.latent_dim),
                  nn::DenoiserParams<float>(model.latent_dim)};
  g.loss = accumulate_gradients(model, x0, timesteps, eps, g.encoder, g.denoiser);
  return g;
}

TrainResult train(std::span<const Image* const> images, const TrainConfig& cfg, const ProgressFn& progress) {
  if (images.empty()) throw DomainError("training split is empty");
  if (cfg.total_steps < 1) throw DomainError("total_steps must be at least 1");
  if (cfg.batch_size < 1) throw DomainError("batch_size must be at least 1");
  if (cfg.trace_every < 1) throw DomainError("trace interval must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  const std::clock_t cpu_start = std::clock();

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.model = DaeModel::create(cfg.latent_dim, cfg.horizon, rng);
  DaeModel& model = result.model;

  const Tensor corpus = images_to_batch(images);
  constexpr std::size_t px = nn::kImageSize * nn::kImageSize;
  const int n_images = static_cast<int>(images.size());
  const int bs = cfg.batch_size;

  nn::EncoderParams<float> genc(cfg.latent_dim);
  nn::DenoiserParams<float> gden(cfg.latent_dim);
  std::vector<nn::ParamSlot> slots;
  nn::append_slots(model.encoder, genc, slots);
  nn::append_slots(model.denoiser, gden, slots);
  nn::AdamState adam;
  const nn::AdamOptions opt{cfg.lr};

  std::uniform_int_distribution<int> pick(0, n_images - 1);
  std::uniform_int_distribution<int> pick_t(1, model.schedule.T);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Tensor x0({bs, 1, nn::kImageSize, nn::kImageSize});
  Tensor eps(x0.dims());
  std::vector<int> ts(bs);
  LossPoint window;
  double window_sum = 0.0;
  long long window_count = 0;

  for (long long step = 0; step < cfg.total_steps; ++step) {
    for (int i = 0; i < bs; ++i) {
      const int k = pick(rng);
      std::copy(corpus.data() + k * px, corpus.data() + (k + 1) * px, x0.data() + i * px);
    }
    for (int i = 0; i < bs; ++i) ts[i] = pick_t(rng);
    for (auto& v : eps.values()) v = normal(rng);

    zero_params(genc);
    zero_params(gden);
    const double loss = accumulate_gradients(model, x0, ts, eps, genc, gden);
    if (!std::isfinite(loss)) throw TrainingError(step, "non-finite loss");
    try {
      nn::adam_step(slots, adam, opt);
    } catch (const OptimizerError& e) {
      throw TrainingError(step, e.what());
    }

    if (step % cfg.trace_every == 0) {
      window = LossPoint{step, loss, 0.0};
      window_sum = 0.0;
      window_count = 0;
    }
    window_sum += loss;
    ++window_count;
    if ((step + 1) % cfg.trace_every == 0 || step + 1 == cfg.total_steps) {
      window.window_mean = window_sum / static_cast<double>(window_count);
      result.trace.push_back(window);
      if (progress) progress(window);
    }
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && !cfg.checkpoint_path.empty())
      save_checkpoint(model, cfg.checkpoint_path);
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.cpu_seconds = static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  return result;
}

std::string checkpoint_bytes(const DaeModel& model) {
  model.validate();
  std::vector<TensorRecord> records;
  auto add = [&](const std::string& name, const Tensor& t) {
    TensorRecord r{name, {}, {t.values().begin(), t.values().end()}};
    for (int d : t.dims()) r.dims.push_back(static_cast<std::uint32_t>(d));
    records.push_back(std::move(r));
  };
  model.encoder.visit(add);
  model.denoiser.visit(add);
  TensorRecord sched{"schedule", {5}, {static_cast<float>(model.schedule.T)}};
  push_double(sched.data, model.schedule.beta_start);
  push_double(sched.data, model.schedule.beta_end);
  records.push_back(std::move(sched));
  return encode_records(records);
}

void save_checkpoint(const DaeModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_bytes(model));
}

DaeModel load_checkpoint(const std::filesystem::path& path) {
  const auto records = read_records(path);
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : records)
    if (!by_name.emplace(r.name, &r).second) throw FormatError("duplicate record " + r.name);
  auto find = [&](const std::string& name) -> const TensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks record " + name);
    return *it->second;
  };
  const auto& fc = find("encoder.fc.weight");
  if (fc.dims.size() != 2 || fc.dims[0] < 1) throw FormatError("malformed encoder.fc.weight");
  const int d = static_cast<int>(fc.dims[0]);

  DaeModel m;
  m.latent_dim = d;
  m.encoder = nn::EncoderParams<float>(d);
  m.denoiser = nn::DenoiserParams<float>(d);
  std::size_t used = 0;
  auto fill = [&](const std::string& name, Tensor& t) {
    const auto& r = find(name);
    std::vector<int> dims(r.dims.begin(), r.dims.end());
    if (dims != t.dims())
      throw ConfigError("record " + name + " has dims " + nn::shape_string(dims) + ", expected " +
                        nn::shape_string(t.dims()));
    t = Tensor(std::move(dims), r.data);
    ++used;
  };
  m.encoder.visit(fill);
  m.denoiser.visit(fill);
  const auto& sched = find("schedule");
  if (sched.data.size() != 5) throw FormatError("malformed schedule record");
  m.schedule = make_schedule(static_cast<int>(sched.data[0]), pop_double(sched.data, 1),
                             pop_double(sched.data, 3));
  if (used + 1 != records.size()) throw FormatError("checkpoint has unexpected records");
  m.validate();
  return m;
}

std::vector<LatentRecord> embed_images(const DaeModel& model, std::span<const Image* const> images,
                                       std::span<const int> ids) {
  if (images.size() != ids.size()) throw ShapeError("one id per image required");
  const Tensor z = encode_semantic(model, images_to_batch(images));
  std::vector<LatentRecord> out;
  const int d = model.latent_dim;
  for (std::size_t i = 0; i < images.size(); ++i) {
    LatentRecord r{ids[i], std::vector<float>(z.data() + i * d, z.data() + (i + 1) * d)};
    for (float v : r.z)
      if (!std::isfinite(v)) throw NumericError("non-finite latent for sample " + std::to_string(ids[i]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_latent_cache(const std::filesystem::path& path, const std::vector<LatentRecord>& records) {
  const std::uint32_t d = records.empty() ? 0 : static_cast<std::uint32_t>(records.front().z.size());
  std::string out = "ZSEM";
  auto put32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put32(static_cast<std::uint32_t>(records.size()));
  put32(d);
  for (const auto& r : records) {
    if (r.z.size() != d) throw ShapeError("latent records differ in dimension");
    put32(static_cast<std::uint32_t>(r.id));
    out.append(reinterpret_cast<const char*>(r.z.data()), d * sizeof(float));
  }
  write_file_atomic(path, out);
}

std::vector<LatentRecord> read_latent_cache(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "ZSEM") != 0)
    throw FormatError(path.string() + ": not a latent cache");
  std::uint32_t count, d;
  std::memcpy(&count, bytes.data() + 4, 4);
  std::memcpy(&d, bytes.data() + 8, 4);
  const std::size_t rec = 4 + static_cast<std::size_t>(d) * 4;
  if (bytes.size() != 12 + rec * count) throw FormatError(path.string() + ": latent cache size mismatch");
  std::vector<LatentRecord> out(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const char* p = bytes.data() + 12 + i * rec;
    std::uint32_t id;
    std::memcpy(&id, p, 4);
    out[i].id = static_cast<int>(id);
    out[i].z.resize(d);
    std::memcpy(out[i].z.data(), p + 4, d * 4);
  }
  return out;
}

}  // namespace latentce
