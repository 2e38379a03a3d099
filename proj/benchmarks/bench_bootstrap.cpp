#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moestress/probe.hpp"

using namespace moestress;

namespace {

// Bootstrap confidence interval for the TTFT ratio; arg 0 is the resample
// count, arg 1 the per-arm sample count.
void bootstrap_ci_bench(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> attack_ms(25.0, 35.0);
  std::uniform_real_distribution<double> normal_ms(8.0, 12.0);
  std::vector<double> attack(state.range(1));
  std::vector<double> normal(state.range(1));
  for (double& x : attack) x = attack_ms(rng);
  for (double& x : normal) x = normal_ms(rng);

  for (auto _ : state) {
    const RatioEstimate r = r_api_ci(attack, normal,
                                     static_cast<int>(state.range(0)), 0.95, 42);
    benchmark::DoNotOptimize(r.lower);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(bootstrap_ci_bench)
    ->Args({10000, 8})
    ->Args({10000, 64})
    ->Args({100000, 8})
    ->Unit(benchmark::kMillisecond);
