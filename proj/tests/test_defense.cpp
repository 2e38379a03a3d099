#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "moestress/defense.hpp"
#include "moestress/errors.hpp"
#include "moestress/router.hpp"

using namespace moestress;

namespace {

ModelArch make_arch(int layers, int experts, int top_k, int vocab = 1000) {
  ModelArch a;
  a.layers = layers;
  a.experts_per_layer = experts;
  a.top_k = top_k;
  a.vocab_size = vocab;
  return a;
}

VulnerabilityMap make_vmap(std::vector<std::vector<int>> v, int scanned) {
  VulnerabilityMap m;
  m.v = std::move(v);
  m.tokens_scanned = scanned;
  return m;
}

// Exhaustive minimum over balanced partitions of the max per-device
// vulnerability sum; oracle for the greedy's quality guard.
int brute_force_best(const std::vector<int>& v, int devices) {
  const int experts = static_cast<int>(v.size());
  const int cap = experts / devices;
  std::vector<int> assign(experts, -1);
  std::vector<int> count(devices, 0);
  std::vector<int> sum(devices, 0);
  int best = std::numeric_limits<int>::max();
  const auto recurse = [&](auto&& self, int e) -> void {
    if (e == experts) {
      int worst = 0;
      for (int d = 0; d < devices; ++d) worst = std::max(worst, sum[d]);
      best = std::min(best, worst);
      return;
    }
    for (int d = 0; d < devices; ++d) {
      if (count[d] == cap) continue;
      ++count[d];
      sum[d] += v[e];
      self(self, e + 1);
      --count[d];
      sum[d] -= v[e];
    }
  };
  recurse(recurse, 0);
  return best;
}

}  // namespace

TEST_CASE("greedy placement matches the worked partition") {
  const auto vmap = make_vmap({{10, 8, 2, 1}}, 10);
  const std::vector<int> assignment = balance_by_vulnerability(vmap, 0, 2);
  // Sorted by v: e0(10)->d0, e1(8)->d1, e2(2)->d1 (V=8<10), e3(1)->d0.
  CHECK(assignment == std::vector<int>{0, 1, 1, 0});
}

TEST_CASE("greedy placement breaks ties toward lower indices") {
  const auto vmap = make_vmap({{5, 5, 5, 5}}, 5);
  CHECK(balance_by_vulnerability(vmap, 0, 2) == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("greedy placement on one device assigns everything to it") {
  const auto vmap = make_vmap({{3, 1, 2}}, 3);
  CHECK(balance_by_vulnerability(vmap, 0, 1) == std::vector<int>{0, 0, 0});
}

TEST_CASE("greedy placement requires divisible expert counts") {
  const auto vmap = make_vmap({{1, 2, 3}}, 3);
  CHECK_THROWS_AS(balance_by_vulnerability(vmap, 0, 2), ConfigError);
}

TEST_CASE("greedy placement always fills devices to capacity") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int devices = 1 << (rng() % 3);           // 1, 2, or 4
    const int experts = devices * (1 + rng() % 2);  // cap 1 or 2
    std::vector<int> v(experts);
    for (int& x : v) x = static_cast<int>(rng() % 50);
    const auto vmap = make_vmap({v}, 50);
    const auto assignment = balance_by_vulnerability(vmap, 0, devices);
    std::vector<int> counts(devices, 0);
    for (int d : assignment) {
      REQUIRE(d >= 0);
      REQUIRE(d < devices);
      ++counts[d];
    }
    for (int c : counts) CHECK(c == experts / devices);
  }
}

TEST_CASE("greedy max-device vulnerability is near the brute-force optimum") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int devices = 2 + static_cast<int>(rng() % 2);  // 2 or 3
    const int experts = devices * 2;
    std::vector<int> v(experts);
    for (int& x : v) x = static_cast<int>(rng() % 100);
    const auto vmap = make_vmap({v}, 100);
    const auto assignment = balance_by_vulnerability(vmap, 0, devices);
    std::vector<int> sums(devices, 0);
    for (int e = 0; e < experts; ++e) sums[assignment[e]] += v[e];
    const int greedy_worst = *std::max_element(sums.begin(), sums.end());
    const int best = brute_force_best(v, devices);
    CHECK(greedy_worst <= 1.5 * best + 1e-9);
  }
}

TEST_CASE("vulnerability-aware deployment places every layer independently") {
  const auto vmap = make_vmap({{10, 8, 2, 1}, {1, 2, 8, 10}}, 10);
  const Deployment d = vulnerability_aware_deployment(vmap, 2);
  CHECK(d.layer_map(0) == std::vector<int>{0, 1, 1, 0});
  CHECK(d.layer_map(1) == std::vector<int>{0, 1, 1, 0});
}

TEST_CASE("scan counts tokens whose profile saturates an expert") {
  RouterConfig cfg;
  cfg.arch = make_arch(3, 8, 2, 200);
  cfg.seed = 19;
  cfg.attractor_experts = 2;  // block == top-k, so hits are exactly the block
  const SyntheticRouter router(cfg);

  std::vector<int> tokens(32);
  std::iota(tokens.begin(), tokens.end(), 0);
  const VulnerabilityMap vmap = vulnerability_scan(router, tokens, 16, 0.9);

  CHECK(vmap.tokens_scanned == 32);
  CHECK(vmap.layers() == 3);
  for (int l = 0; l < 3; ++l) {
    const auto& block = router.attractors(l);
    int total = 0;
    for (int e = 0; e < 8; ++e) {
      total += vmap.v[l][e];
      const bool in_block =
          std::find(block.begin(), block.end(), e) != block.end();
      CHECK(vmap.v[l][e] == (in_block ? 32 : 0));
    }
    CHECK(total == 2 * 32);  // k hits per scanned token
  }
}

TEST_CASE("scan respects the saturation threshold boundary") {
  // Repeated-token profiles are binary, so any tau in (0,1] counts exactly
  // the top-k experts; tau == 1.0 must still count rho == 1.0 (>=, not >).
  RouterConfig cfg;
  cfg.arch = make_arch(2, 8, 2, 100);
  cfg.seed = 29;
  const SyntheticRouter router(cfg);
  const std::vector<int> tokens{5};
  const VulnerabilityMap strict = vulnerability_scan(router, tokens, 8, 1.0);
  int hits = 0;
  for (const auto& layer : strict.v) {
    for (int x : layer) hits += x;
  }
  CHECK(hits == 2 * 2);  // layers * k
}

TEST_CASE("scan of no tokens yields an empty map") {
  RouterConfig cfg;
  cfg.arch = make_arch(2, 4, 1, 100);
  const SyntheticRouter router(cfg);
  const VulnerabilityMap vmap =
      vulnerability_scan(router, std::vector<int>{}, 8, 0.9);
  CHECK(vmap.tokens_scanned == 0);
  int total = 0;
  for (const auto& layer : vmap.v) {
    for (int x : layer) total += x;
  }
  CHECK(total == 0);
}

TEST_CASE("scan is deterministic") {
  RouterConfig cfg;
  cfg.arch = make_arch(2, 8, 2, 100);
  cfg.seed = 101;
  const SyntheticRouter router(cfg);
  std::vector<int> tokens(16);
  std::iota(tokens.begin(), tokens.end(), 0);
  const auto a = vulnerability_scan(router, tokens, 8, 0.9);
  const auto b = vulnerability_scan(router, tokens, 8, 0.9, 4);
  CHECK(a.v == b.v);
  CHECK(a.tokens_scanned == b.tokens_scanned);
}

TEST_CASE("vulnerability map JSON round-trip") {
  auto vmap = make_vmap({{3, 0, 2, 1}}, 3);
  vmap.tau = 0.8;
  vmap.skipped_tokens = {7, 9};
  const VulnerabilityMap back = VulnerabilityMap::from_json(vmap.to_json());
  CHECK(back.v == vmap.v);
  CHECK(back.tau == vmap.tau);
  CHECK(back.tokens_scanned == vmap.tokens_scanned);
  CHECK(back.skipped_tokens == vmap.skipped_tokens);
}

TEST_CASE("vulnerability map JSON validation") {
  auto vmap = make_vmap({{5}}, 3);  // count exceeds tokens_scanned
  CHECK_THROWS_AS(VulnerabilityMap::from_json(vmap.to_json()), Error);
  CHECK_THROWS_AS(VulnerabilityMap::from_json("{"), ParseError);
}

TEST_CASE("defense evaluation lowers coverage on an attractor router") {
  RouterConfig cfg;
  cfg.arch = make_arch(4, 16, 2, 400);
  cfg.seed = 37;
  cfg.attractor_experts = 4;
  const SyntheticRouter router(cfg);

  std::vector<int> tokens(48);
  std::iota(tokens.begin(), tokens.end(), 0);
  const VulnerabilityMap vmap = vulnerability_scan(router, tokens, 16, 0.9);
  const TraceSource source = repeated_trace_source(router, 16);
  const DefenseEvaluation eval = evaluate_defense(source, vmap, 4, tokens);

  CHECK(eval.after.coverage < eval.before.coverage);
  CHECK(eval.before.tokens_evaluated == 48);
  CHECK(eval.after.tokens_evaluated == 48);

  const std::string csv = eval.to_csv();
  CHECK(csv.substr(0, csv.find('\n')) == "token_id,B_before,B_after");
}

TEST_CASE("ppl proxy hand values") {
  const std::vector<int> repeated{7, 7, 7, 7, 7};
  CHECK(ppl_proxy(repeated) == 1.0);

  const std::vector<int> alternating{1, 2, 1, 2, 1, 2};
  CHECK(ppl_proxy(alternating) == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<int> distinct{1, 2, 3, 4, 5};
  CHECK(ppl_proxy(distinct) == doctest::Approx(5.0).epsilon(1e-12));

  CHECK_THROWS_AS(ppl_proxy(std::vector<int>{}), Error);
}

TEST_CASE("ppl proxy never exceeds the distinct-token count") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> seq(200);
    for (int& x : seq) x = static_cast<int>(rng() % 20);
    const double score = ppl_proxy(seq);
    CHECK(score >= 1.0);
    CHECK(score <= 20.0 + 1e-9);
  }
}

TEST_CASE("filter rejects strictly below the threshold") {
  const std::vector<int> repeated{3, 3, 3, 3};
  CHECK_FALSE(filter_prompt(repeated, 2.0).accept);

  // Alternating pair scores exactly 2.0, which is not below 2.0.
  const std::vector<int> alternating{1, 2, 1, 2};
  CHECK(filter_prompt(alternating, 2.0).accept);

  const std::vector<int> distinct{1, 2, 3, 4};
  const FilterDecision d = filter_prompt(distinct, 2.0);
  CHECK(d.accept);
  CHECK(d.score == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("filter threshold must exceed one") {
  const std::vector<int> seq{1, 2, 3};
  CHECK_THROWS_AS(filter_prompt(seq, 1.0), ConfigError);
  CHECK_THROWS_AS(filter_prompt(seq, 0.5), ConfigError);
}
