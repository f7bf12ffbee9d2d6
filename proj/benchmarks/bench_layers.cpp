#include <benchmark/benchmark.h>

#include <random>

#include "latentce/layers.hpp"

namespace {

using namespace latentce::nn;

Tensor random(std::vector<int> dims, std::mt19937_64& rng) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Channels-last input [batch, extent, extent, channels].
void BM_ConvForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0)), extent = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  Conv2d<float> conv(32, 32, 1);
  kaiming_uniform(conv.weight, 9 * 32, rng);
  const Tensor x = random({batch, extent, extent, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvForward)->Args({1, 32})->Args({64, 32})->Args({64, 16});

void BM_ConvBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  Conv2d<float> conv(32, 32, 1), grad(32, 32, 1);
  kaiming_uniform(conv.weight, 9 * 32, rng);
  const Tensor x = random({batch, 32, 32, 32}, rng);
  Conv2d<float>::Cache cache;
  const Tensor y = conv.forward(x, &cache);
  const Tensor dy = random(y.dims(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(cache, dy, grad));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvBackward)->Arg(1)->Arg(64);

void BM_UpsampleConvForward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  UpsampleConv2d<float> up(32, 32);
  kaiming_uniform(up.weight, 9 * 32, rng);
  const Tensor x = random({64, 16, 16, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(up.forward(x));
}
BENCHMARK(BM_UpsampleConvForward);

}  // namespace

BENCHMARK_MAIN();
