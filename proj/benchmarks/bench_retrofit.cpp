#include "mohone/retrofit.hpp"

#include <benchmark/benchmark.h>

using namespace mohone;

namespace {

RetrofitProblem problem(Eigen::Index n) {
  const RowMatrix f = RowMatrix::Random(n, 32);
  return RetrofitProblem::with_unit_alpha(RowMatrix::Random(n, 100), build_neighbor_sets(f, 10, 4));
}

void BM_NeighborSets(benchmark::State& state) {
  const RowMatrix f = RowMatrix::Random(state.range(0), 32);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighbor_sets(f, 10, static_cast<unsigned>(state.range(1))));
}
BENCHMARK(BM_NeighborSets)->Args({2000, 1})->Args({2000, 4})->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_RetrofitSweep(benchmark::State& state) {
  const auto p = problem(state.range(0));
  RowMatrix q = p.q_hat;
  for (auto _ : state) benchmark::DoNotOptimize(retrofit_step(p, q));
}
BENCHMARK(BM_RetrofitSweep)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
