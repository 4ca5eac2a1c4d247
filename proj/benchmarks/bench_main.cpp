#include <benchmark/benchmark.h>

#include "mcb/discrete_space.hpp"
#include "mcb/marginal_model.hpp"
#include "mcb/oracle.hpp"
#include "mcb/samplers.hpp"
#include "mcb/schedule.hpp"

namespace {

using namespace mcb;

StateVector noise(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  StateVector x(dim);
  rng.fill_normal(x);
  return x;
}

// Oracle cost grows as V^L; arguments are (V, L).
void BM_JointPosterior(benchmark::State& state) {
  const Shape shape{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1))};
  const auto nu = JointDist::dirichlet(shape, 1.0, 1);
  const auto x = noise(shape.dim(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(joint_posterior(nu, 0.8, x));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(nu.size()));
}
BENCHMARK(BM_JointPosterior)->Args({3, 2})->Args({4, 3})->Args({4, 5})->Args({8, 4})->Complexity();

void BM_McbStepOracle(benchmark::State& state) {
  const auto nu = JointDist::copy(Shape{3, 2});
  const OraclePredictor oracle(nu);
  const auto y = noise(6, 3);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(mcb_step(y, 1.0, 0.9, oracle, 1.0, 1.0, rng));
}
BENCHMARK(BM_McbStepOracle);

void BM_MlpPredict(benchmark::State& state) {
  const Shape shape{4, 4};
  const MlpPredictor model(shape, static_cast<std::size_t>(state.range(0)), 5);
  const auto x = noise(shape.dim(), 6);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x, 0.7));
}
BENCHMARK(BM_MlpPredict)->Arg(32)->Arg(64)->Arg(256);

void BM_ChainByMethod(benchmark::State& state) {
  const OraclePredictor oracle(JointDist::dirichlet(Shape{3, 3}, 1.0, 7));
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(kDefaultHorizon, 64);
  cfg.method = static_cast<Method>(state.range(0));
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng = chain_stream(8, i++);
    benchmark::DoNotOptimize(run_chain(cfg, oracle, rng));
  }
  state.SetLabel(std::string(to_string(cfg.method)));
}
BENCHMARK(BM_ChainByMethod)->DenseRange(0, 3);

void BM_KernelLogDensity(benchmark::State& state) {
  const auto nu = JointDist::copy(Shape{3, 3});
  const auto y = noise(9, 9);
  const auto z = noise(9, 10);
  const auto post = joint_posterior(nu, 1.0, y);
  const auto m = token_marginals(post);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mixture_kernel_logdensity(post, y, 1.0, 0.5, z));
    benchmark::DoNotOptimize(mcb_kernel_logdensity(m, y, 1.0, 0.5, z));
  }
}
BENCHMARK(BM_KernelLogDensity);

}  // namespace

BENCHMARK_MAIN();
