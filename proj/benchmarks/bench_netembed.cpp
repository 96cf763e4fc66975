#include "mohone/netembed.hpp"
#include "support/oracles.hpp"

#include <benchmark/benchmark.h>

using namespace mohone;

namespace {

HeatDiffusionMatrix er_heat(NodeId n) {
  return heat_matrix_exact(normalized_laplacian(UndirectedGraph(n, testing::erdos_renyi_edges(n, 6.0 / n, 2))), 1.0);
}

void BM_ShnbSampler(benchmark::State& state) {
  const auto psi = er_heat(static_cast<NodeId>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_shnb_sampler(psi));
}
BENCHMARK(BM_ShnbSampler)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_StructuralSampler(benchmark::State& state) {
  const auto sigs = heat_signatures(er_heat(static_cast<NodeId>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(build_structural_sampler(sigs));
}
BENCHMARK(BM_StructuralSampler)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SgnsTraining(benchmark::State& state) {
  const auto sampler = build_shnb_sampler(er_heat(1000));
  TrainConfig cfg;
  cfg.dim = 100;
  cfg.epochs = 1;
  cfg.threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_embeddings(sampler, cfg));
  state.SetItemsProcessed(state.iterations() * 1000 * static_cast<std::int64_t>(cfg.pairs_per_node_per_epoch));
}
BENCHMARK(BM_SgnsTraining)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
