#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "moestress/metrics.hpp"
#include "moestress/router.hpp"

using namespace moestress;

namespace {

ModelArch bench_arch(int experts) {
  ModelArch a;
  a.layers = 8;
  a.experts_per_layer = experts;
  a.top_k = 2;
  a.vocab_size = 32000;
  return a;
}

// Vocabulary coverage sweep: dominant offline workload. Arg 0 is the token
// sample size, arg 1 the expert count, arg 2 the thread count.
void coverage_sweep(benchmark::State& state) {
  RouterConfig cfg;
  cfg.arch = bench_arch(static_cast<int>(state.range(1)));
  cfg.seed = 42;
  const SyntheticRouter router(cfg);
  const Deployment dep = build_default_deployment(cfg.arch, 8);

  std::vector<int> tokens(state.range(0));
  std::iota(tokens.begin(), tokens.end(), 0);

  for (auto _ : state) {
    const CoverageReport r =
        coverage(router, dep, tokens, 64, static_cast<int>(state.range(2)));
    benchmark::DoNotOptimize(r.coverage);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(coverage_sweep)
    ->Args({256, 64, 1})
    ->Args({256, 64, 0})   // all hardware threads
    ->Args({1024, 64, 0})
    ->Args({256, 256, 0})
    ->Unit(benchmark::kMillisecond);
