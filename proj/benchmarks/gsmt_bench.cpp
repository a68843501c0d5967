#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gsmt/dss.hpp"
#include "gsmt/fft.hpp"
#include "gsmt/gated_ssl.hpp"
#include "gsmt/model.hpp"
#include "gsmt/ops.hpp"
#include "gsmt/verify.hpp"

namespace {

using namespace gsmt;

Tensor gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = gaussian(n, n, 1), b = gaussian(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_ConvolveFft(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const Tensor x = gaussian(1, L, 3), k = gaussian(1, L, 4);
  std::vector<double> out(L);
  for (auto _ : state) {
    fft_convolve_causal(x.data(), k.data(), out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConvolveFft)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNLogN);

void BM_ConvolveDirect(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const Tensor x = gaussian(1, L, 3), k = gaussian(1, L, 4);
  std::vector<double> out(L);
  for (auto _ : state) {
    direct_convolve_causal(x.data(), k.data(), out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConvolveDirect)->RangeMultiplier(4)->Range(64, 4096)->Complexity(benchmark::oNSquared);

void BM_DssKernel(benchmark::State& state) {
  std::mt19937_64 rng(5);
  const DssParams p = make_dss_params(64, 64, rng);
  const auto L = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(compute_kernel(p, L));
}
BENCHMARK(BM_DssKernel)->RangeMultiplier(4)->Range(256, 4096);

// Inference forward of each global mechanism at d = 64.
void mechanism_forward(benchmark::State& state, MechanismKind kind) {
  const auto L = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  const GatedSslDims dims{64, 64, 64, 16, true};
  const MechanismParams p = make_mechanism_params(kind, dims, rng);
  const Tensor x = gaussian(L, 64, 7);
  for (auto _ : state) benchmark::DoNotOptimize(global_mechanism_forward(p, x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK_CAPTURE(mechanism_forward, gated_ssl, MechanismKind::gated_ssl)->RangeMultiplier(2)->Range(256, 2048);
BENCHMARK_CAPTURE(mechanism_forward, self_attention, MechanismKind::self_attention)
    ->RangeMultiplier(2)
    ->Range(256, 2048);
BENCHMARK_CAPTURE(mechanism_forward, conv1d, MechanismKind::conv1d)->RangeMultiplier(2)->Range(256, 2048);

void BM_TrainStepMinimal(benchmark::State& state) {
  const GsmtConfig config = minimal_config();
  GsmtModel model(config, 1);
  std::vector<Sample> batch;
  for (std::uint64_t s = 0; s < 4; ++s) batch.push_back(random_sample(config, 4, 4, 3, 3, s));
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, batch, 0.0, step++));
}
BENCHMARK(BM_TrainStepMinimal);

void BM_PredictToyScale(benchmark::State& state) {
  GsmtConfig config;
  GsmtModel model(config, 1);
  const Sample sample = random_sample(config, 16, 16, 4, 5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, sample));
}
BENCHMARK(BM_PredictToyScale);

}  // namespace

BENCHMARK_MAIN();
