#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moestress/metrics.hpp"
#include "moestress/trace.hpp"

using namespace moestress;

namespace {

// Normalized selection entropy over a synthetic profile; arg 0 is the
// expert count per layer.
void normalized_entropy_bench(benchmark::State& state) {
  const int experts = static_cast<int>(state.range(0));
  const int layers = 32;
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> rho(layers, std::vector<double>(experts));
  for (auto& layer : rho) {
    double sum = 0.0;
    for (double& x : layer) {
      x = (rng() % 1000) / 1000.0;
      sum += x;
    }
    for (double& x : layer) x = x / sum * 2.0;  // mass k = 2
  }
  const ExpertLoadProfile profile(std::move(rho), 2);

  for (auto _ : state) {
    benchmark::DoNotOptimize(normalized_entropy(profile));
  }
  state.SetItemsProcessed(state.iterations() * layers * experts);
}

}  // namespace

BENCHMARK(normalized_entropy_bench)->Arg(64)->Arg(512);
