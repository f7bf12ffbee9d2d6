#include <benchmark/benchmark.h>

#include <random>

#include "latentce/dae.hpp"
#include "latentce/synthcorpus.hpp"

namespace {

using namespace latentce;

std::vector<Image> images(int n) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(quantized(render_sample(mix_seed(1, i), (i % 11) / 10.0)));
  return out;
}

std::vector<const Image*> pointers(const std::vector<Image>& v) {
  std::vector<const Image*> p;
  for (const auto& i : v) p.push_back(&i);
  return p;
}

void BM_DenoiserForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const DaeModel m = DaeModel::create(kDefaultLatentDim, kDefaultHorizon, rng);
  const auto imgs = images(batch);
  const nn::Tensor x = images_to_batch(pointers(imgs));
  const nn::Tensor z({batch, kDefaultLatentDim});
  const std::vector<int> ts(batch, 500);
  for (auto _ : state) benchmark::DoNotOptimize(nn::denoiser_forward(m.denoiser, x, ts, z, kDefaultHorizon));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(20)->Arg(64)->Unit(benchmark::kMillisecond);

// One optimisation step at the training batch size.
void BM_TrainStep(benchmark::State& state) {
  const auto imgs = images(64);
  TrainConfig cfg;
  cfg.total_steps = 1;
  cfg.trace_every = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(pointers(imgs), cfg));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_EncodeDecode(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const DaeModel m = DaeModel::create(kDefaultLatentDim, kDefaultHorizon, rng);
  const auto imgs = images(1);
  for (auto _ : state) {
    const Encoding e = encode(m, pointers(imgs), steps);
    benchmark::DoNotOptimize(decode(m, e.z, e.x_T, steps));
  }
}
BENCHMARK(BM_EncodeDecode)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
