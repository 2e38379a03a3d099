#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moestress/latsim.hpp"
#include "moestress/trace.hpp"

using namespace moestress;

namespace {

RoutingTrace random_trace(int layers, int experts, int k, int tokens) {
  std::mt19937_64 rng(7);
  RoutingTrace t(layers, experts, k);
  std::vector<int> pool(experts);
  for (int i = 0; i < experts; ++i) pool[i] = i;
  for (int i = 0; i < tokens; ++i) {
    std::vector<TokenSelection> per_layer(layers);
    for (auto& s : per_layer) {
      for (int j = 0; j < k; ++j) {
        std::swap(pool[j], pool[j + rng() % (experts - j)]);
      }
      s.experts.assign(pool.begin(), pool.begin() + k);
      s.weights.assign(k, 1.0 / k);
    }
    t.append_token(per_layer);
  }
  return t;
}

// Prefill timeline over a full trace; arg 0 is the token count.
void simulate_prefill_bench(benchmark::State& state) {
  const int tokens = static_cast<int>(state.range(0));
  const RoutingTrace t = random_trace(8, 64, 2, tokens);
  ModelArch arch;
  arch.layers = 8;
  arch.experts_per_layer = 64;
  arch.top_k = 2;
  arch.vocab_size = 1000;
  const Deployment dep = build_default_deployment(arch, 8);
  CostModel cost;
  cost.allreduce_cost = 0.1;
  cost.attention_cost_per_token = 0.05;

  for (auto _ : state) {
    const TimelineReport r = simulate_prefill(t, dep, cost);
    benchmark::DoNotOptimize(r.total_prefill_time);
  }
  state.SetItemsProcessed(state.iterations() * tokens);
}

}  // namespace

BENCHMARK(simulate_prefill_bench)->Arg(1024)->Arg(16384)
    ->Unit(benchmark::kMicrosecond);
