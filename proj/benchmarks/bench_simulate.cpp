#include <benchmark/benchmark.h>

#include "divopt/rng.hpp"
#include "divopt/simulate.hpp"

namespace {

void BM_ziggurat_normal(benchmark::State& state) {
  divopt::Xoshiro256pp rng(7);
  divopt::ZigguratNormal normal;
  for (auto _ : state) benchmark::DoNotOptimize(normal(rng));
}
BENCHMARK(BM_ziggurat_normal);

void BM_simulate_paths(benchmark::State& state) {
  const divopt::ModelParams p{6.0, 1.5, 2.0, 0.1};
  const divopt::ActionGrid grid({0.9, 0.8}, {2.0, 4.0});
  const divopt::ThresholdSolution sol =
      divopt::solve_backward(p, grid, divopt::SolverConfig::defaults(p, grid));
  divopt::SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.n_paths = state.range(0);
  cfg.horizon_eps = 1e-2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        divopt::simulate_strategy(p, divopt::threshold_strategy(sol), 5.0, 0.9, 2.0, cfg));
    cfg.seed += 1;
  }
  state.SetItemsProcessed(state.iterations() * cfg.n_paths);
}
BENCHMARK(BM_simulate_paths)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
