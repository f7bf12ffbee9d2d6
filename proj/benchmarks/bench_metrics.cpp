#include <benchmark/benchmark.h>

#include <random>

#include "latentce/geometry.hpp"
#include "latentce/metrics.hpp"
#include "latentce/synthcorpus.hpp"

namespace {

using namespace latentce;

std::vector<Vector> gaussian(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<Vector> out(n, Vector(d));
  for (auto& v : out)
    for (auto& x : v) x = nd(rng);
  return out;
}

void BM_LatentFrechet(benchmark::State& state) {
  const auto a = gaussian(200, 32, 1), b = gaussian(200, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(latent_frechet(a, b));
}
BENCHMARK(BM_LatentFrechet);

void BM_Ssim(benchmark::State& state) {
  const Image a = render_sample(1, 0.2), b = render_sample(2, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

void BM_RocAuc(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> s(static_cast<std::size_t>(state.range(0)));
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    y[i] = static_cast<int>(i % 2);
    s[i] = nd(rng) + y[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, y));
}
BENCHMARK(BM_RocAuc)->Arg(100)->Arg(10000);

void BM_FitSvm(benchmark::State& state) {
  ProbeDataset d;
  d.w = gaussian(200, 32, 4);
  for (std::size_t i = 0; i < d.w.size(); ++i) {
    d.y.push_back(static_cast<int>(i % 2));
    d.w[i][0] += d.y.back() ? 1.5 : -1.5;
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_svm(d));
}
BENCHMARK(BM_FitSvm)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
