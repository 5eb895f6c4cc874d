#include <benchmark/benchmark.h>

#include "divopt/curve.hpp"
#include "divopt/model.hpp"

namespace {

const divopt::ModelParams kParams{6.0, 1.5, 2.0, 0.1};

void BM_theta_roots(benchmark::State& state) {
  double a = 0.8, c = 2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(divopt::theta_roots(kParams, a, c));
    a = a == 0.8 ? 0.9 : 0.8;
    c = c == 2.0 ? 4.0 : 2.0;
  }
}
BENCHMARK(BM_theta_roots);

void BM_theta_partials(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(divopt::theta_partials(kParams, 0.85, 3.0));
}
BENCHMARK(BM_theta_partials);

void BM_b_aux_dx(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(divopt::b_aux_dx(kParams, 5.0, 0.85, 3.0));
}
BENCHMARK(BM_b_aux_dx);

void BM_big_B_ratio(benchmark::State& state) {
  for (auto _ : state) {
    const double b0 = divopt::big_B(kParams, divopt::BigBKind::c0, 10.0, 0.8, 3.0);
    const double b1 = divopt::big_B(kParams, divopt::BigBKind::c1, 10.0, 0.8, 3.0);
    benchmark::DoNotOptimize(b0 / b1);
  }
}
BENCHMARK(BM_big_B_ratio);

}  // namespace

BENCHMARK_MAIN();
