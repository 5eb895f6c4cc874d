#include <benchmark/benchmark.h>

#include "divopt/threshold.hpp"

namespace {

const divopt::ModelParams kParams{10.0, 1.5, 2.0, 0.1};

divopt::ActionGrid make_grid(int m, int n) {
  std::vector<double> as(m), cs(n);
  for (int i = 0; i < m; ++i) as[i] = 0.9 - 0.1 * i / std::max(1, m - 1);
  for (int j = 0; j < n; ++j) cs[j] = 2.0 + 2.0 * j / std::max(1, n - 1);
  return divopt::ActionGrid(std::move(as), std::move(cs));
}

void BM_solve_backward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const divopt::ActionGrid grid = make_grid(side, side);
  const divopt::SolverConfig cfg = divopt::SolverConfig::defaults(kParams, grid);
  for (auto _ : state)
    benchmark::DoNotOptimize(divopt::solve_backward(kParams, grid, cfg));
  state.SetLabel(std::to_string(side) + "x" + std::to_string(side));
}
BENCHMARK(BM_solve_backward)->Arg(2)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_eval_W(benchmark::State& state) {
  const divopt::ActionGrid grid = make_grid(3, 3);
  const divopt::SolverConfig cfg = divopt::SolverConfig::defaults(kParams, grid);
  const divopt::ThresholdSolution sol = divopt::solve_backward(kParams, grid, cfg);
  double x = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sol.value(x, 0, 0));
    x = x < 40.0 ? x + 0.1 : 0.0;
  }
}
BENCHMARK(BM_eval_W);

}  // namespace
