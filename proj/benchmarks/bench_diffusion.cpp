#include "mohone/diffusion.hpp"
#include "support/oracles.hpp"

#include <benchmark/benchmark.h>

using namespace mohone;

namespace {

NormalizedLaplacian er_laplacian(NodeId n) {
  return normalized_laplacian(UndirectedGraph(n, testing::erdos_renyi_edges(n, 6.0 / n, 1)));
}

void BM_HeatExact(benchmark::State& state) {
  const auto lap = er_laplacian(static_cast<NodeId>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(heat_matrix_exact(lap, 5.0));
}
BENCHMARK(BM_HeatExact)->Arg(100)->Arg(200)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_HeatChebyshev(benchmark::State& state) {
  const auto lap = er_laplacian(static_cast<NodeId>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(heat_matrix_chebyshev(lap, 5.0, 30));
}
BENCHMARK(BM_HeatChebyshev)->Arg(100)->Arg(200)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

// One column is what a streaming consumer pays per source node.
void BM_HeatChebyshevColumn(benchmark::State& state) {
  const auto lap = er_laplacian(static_cast<NodeId>(state.range(0)));
  const double lmax = estimate_lambda_max(lap);
  for (auto _ : state) benchmark::DoNotOptimize(chebyshev_heat_column(lap, 5.0, 30, lmax, 0));
}
BENCHMARK(BM_HeatChebyshevColumn)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

void BM_Signatures(benchmark::State& state) {
  const auto psi = heat_matrix_exact(er_laplacian(500), 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(heat_signatures(psi, kDefaultSignatureBins, static_cast<unsigned>(state.range(0))));
}
BENCHMARK(BM_Signatures)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
