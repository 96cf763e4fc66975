#include "mohone/eval.hpp"
#include "mohone/kge.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mohone;

namespace {

void BM_FilteredEvaluation(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto emb = init_kge(KgeModel::kTransE, 100, n, 20, 1);
  std::mt19937_64 rng(1);
  std::vector<Triple> test(1000);
  for (auto& t : test)
    t = {static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % 20), static_cast<EntityId>(rng() % n)};
  const FilterIndex filter(test);
  EvalOptions opts;
  opts.threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(make_scorer(emb), n, test, filter, opts));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(test.size()));
}
BENCHMARK(BM_FilteredEvaluation)->Args({5000, 1})->Args({5000, 4})->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_PairedBootstrap(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<double> a(static_cast<std::size_t>(state.range(0))), b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = unif(rng);
    b[i] = unif(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(paired_significance(a, b));
}
BENCHMARK(BM_PairedBootstrap)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
