#include <doctest.h>

#include <fstream>
#include <random>
#include <utility>
#include <vector>

#include "moestress/errors.hpp"
#include "moestress/latsim.hpp"
#include "moestress/metrics.hpp"
#include "temp_dir.hpp"

using namespace moestress;

namespace {

// One layer, four experts, top-2; every token picks `experts`.
RoutingTrace fixed_trace(int tokens, std::vector<int> experts) {
  RoutingTrace t(1, 4, 2);
  for (int i = 0; i < tokens; ++i) {
    std::vector<TokenSelection> s(1);
    s[0].experts = experts;
    s[0].weights = {0.5, 0.5};
    t.append_token(s);
  }
  return t;
}

// Round-robin rotation: token i picks experts (i%4, (i+2)%4), so every
// expert appears in exactly half the tokens.
RoutingTrace rotating_trace(int tokens) {
  RoutingTrace t(1, 4, 2);
  for (int i = 0; i < tokens; ++i) {
    std::vector<TokenSelection> s(1);
    const int a = i % 4;
    const int b = (i + 2) % 4;
    s[0].experts = {std::min(a, b), std::max(a, b)};
    s[0].weights = {0.5, 0.5};
    t.append_token(s);
  }
  return t;
}

}  // namespace

TEST_CASE("concentrated routing puts all busy time on one device") {
  const Deployment d(4, {{0, 1, 2, 3}});
  CostModel cost;  // per-token cost 1, everything else 0
  const auto r = simulate_prefill(fixed_trace(10, {0, 1}), d, cost);
  REQUIRE(r.device_busy.size() == 1);
  CHECK(r.device_busy[0] == std::vector<double>{10.0, 10.0, 0.0, 0.0});
  CHECK(r.straggler_busy == std::vector<double>{10.0});
  CHECK(r.total_prefill_time == 10.0);
}

TEST_CASE("both hot experts on one device double its busy time") {
  const Deployment d(2, {{0, 0, 1, 1}});
  CostModel cost;
  const auto r = simulate_prefill(fixed_trace(10, {0, 1}), d, cost);
  CHECK(r.device_busy[0] == std::vector<double>{20.0, 0.0});
  CHECK(r.device_idle[0] == std::vector<double>{0.0, 20.0});
  CHECK(r.straggler_device == std::vector<int>{0});
}

TEST_CASE("balanced routing leaves no idle time") {
  const Deployment d(2, {{0, 0, 1, 1}});
  CostModel cost;
  const auto r = simulate_prefill(rotating_trace(16), d, cost);
  CHECK(r.device_busy[0] == std::vector<double>{16.0, 16.0});
  CHECK(r.device_idle[0] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("busy time conserves total routed work") {
  const Deployment d(2, {{0, 1, 0, 1}});
  CostModel cost;
  cost.per_token_expert_cost = 0.5;
  cost.per_layer_fixed_cost = 3.0;
  std::mt19937_64 rng(4);
  RoutingTrace t(1, 4, 2);
  for (int i = 0; i < 50; ++i) {
    std::vector<TokenSelection> s(1);
    const int a = static_cast<int>(rng() % 4);
    int b = static_cast<int>(rng() % 4);
    if (b == a) b = (a + 1) % 4;
    s[0].experts = {std::min(a, b), std::max(a, b)};
    s[0].weights = {0.5, 0.5};
    t.append_token(s);
  }
  const auto r = simulate_prefill(t, d, cost);
  double total_busy = 0.0;
  for (double x : r.device_busy[0]) total_busy += x;
  // 50 tokens * k=2 * 0.5 cost + 2 devices * 3.0 fixed
  CHECK(total_busy == doctest::Approx(50 * 2 * 0.5 + 2 * 3.0).epsilon(1e-12));
}

TEST_CASE("layer time adds allreduce but straggler busy excludes it") {
  const Deployment d(2, {{0, 0, 1, 1}});
  CostModel cost;
  cost.allreduce_cost = 5.0;
  cost.attention_cost_per_token = 0.1;
  const auto r = simulate_prefill(fixed_trace(10, {0, 1}), d, cost);
  CHECK(r.straggler_busy == std::vector<double>{20.0});
  CHECK(r.layer_moe_time == std::vector<double>{25.0});
  CHECK(r.total_prefill_time == doctest::Approx(25.0 + 0.1 * 10).epsilon(1e-12));
}

TEST_CASE("an empty trace yields an all-zero report") {
  const Deployment d(2, {{0, 0, 1, 1}});
  const RoutingTrace t(1, 4, 2);
  const auto r = simulate_prefill(t, d, CostModel{});
  CHECK(r.num_tokens == 0);
  CHECK(r.total_prefill_time == 0.0);
}

TEST_CASE("r_moe of a trace against itself is exactly one") {
  const Deployment d(2, {{0, 0, 1, 1}});
  const auto r = simulate_prefill(rotating_trace(16), d, CostModel{});
  CHECK(r_moe(r, r, 0) == 1.0);
  CHECK(r_moe_mean(r, r) == 1.0);
}

TEST_CASE("r_moe equals the device count for fully concentrated routing") {
  const Deployment d(2, {{0, 0, 1, 1}});
  const auto attack = simulate_prefill(fixed_trace(16, {0, 1}), d, CostModel{});
  const auto normal = simulate_prefill(rotating_trace(16), d, CostModel{});
  // Concentrated: one device does all 32 routings; balanced: 16 each.
  CHECK(r_moe(attack, normal, 0) == 2.0);
  CHECK(r_moe_mean(attack, normal) == 2.0);
  CHECK(r_moe_mean(attack, normal) == tmi(2, 2, 2));
}

TEST_CASE("r_moe validates matching shapes and token counts") {
  const Deployment d2(2, {{0, 0, 1, 1}});
  const Deployment d4(4, {{0, 1, 2, 3}});
  const auto a = simulate_prefill(fixed_trace(8, {0, 1}), d2, CostModel{});
  const auto b = simulate_prefill(fixed_trace(16, {0, 1}), d2, CostModel{});
  const auto c = simulate_prefill(fixed_trace(8, {0, 1}), d4, CostModel{});
  CHECK_THROWS_AS(r_moe_mean(a, b), Error);  // token counts differ
  CHECK_THROWS_AS(r_moe_mean(a, c), Error);  // device counts differ
  CHECK_THROWS_AS(r_moe(a, a, 5), Error);    // layer out of range
}

TEST_CASE("zero-work normal arm is rejected rather than divided by") {
  const Deployment d(2, {{0, 0, 1, 1}});
  const RoutingTrace empty(1, 4, 2);
  const auto z = simulate_prefill(empty, d, CostModel{});
  CHECK_THROWS_AS(r_moe_mean(z, z), Error);
}

TEST_CASE("cost model validation rejects negative terms") {
  CostModel cost;
  cost.per_token_expert_cost = -1.0;
  CHECK_THROWS_AS(cost.validate(), ConfigError);
  cost = CostModel{};
  cost.allreduce_cost = -0.1;
  CHECK_THROWS_AS(cost.validate(), ConfigError);
  cost = CostModel{};
  cost.per_token_expert_cost = 0.0;
  CHECK_THROWS_AS(cost.validate(), ConfigError);  // must be positive
}

TEST_CASE("cost model file loading fills missing fields with defaults") {
  TempDir tmp;
  const auto p = tmp.file("cost.json");
  {
    std::ofstream out(p);
    out << R"({"per_token_expert_cost": 2.5, "allreduce_cost": 1.25})";
  }
  const CostModel cost = load_cost_model(p);
  CHECK(cost.per_token_expert_cost == 2.5);
  CHECK(cost.allreduce_cost == 1.25);
  CHECK(cost.per_layer_fixed_cost == 0.0);
  CHECK(cost.attention_cost_per_token == 0.0);
}

TEST_CASE("calibration recovers an exact line with zero residuals") {
  const std::vector<std::pair<double, double>> samples{{2.0, 5.0}, {4.0, 9.0}};
  const CostFit fit = calibrate_cost_model(samples);
  CHECK(fit.model.per_token_expert_cost == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.model.per_layer_fixed_cost == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.max_abs_residual == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("calibration recovers a noisy slope within five percent") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> noise(-0.1, 0.1);
  std::vector<std::pair<double, double>> samples;
  for (int n = 1; n <= 40; ++n) {
    samples.emplace_back(n, 3.0 * n + 2.0 + noise(rng));
  }
  const CostFit fit = calibrate_cost_model(samples);
  CHECK(fit.model.per_token_expert_cost ==
        doctest::Approx(3.0).epsilon(0.05));
  CHECK(fit.max_abs_residual < 0.2);
}

TEST_CASE("calibration rejects degenerate sample sets") {
  const std::vector<std::pair<double, double>> one{{2.0, 5.0}};
  CHECK_THROWS_AS(calibrate_cost_model(one), Error);
  const std::vector<std::pair<double, double>> flat{{2.0, 5.0}, {2.0, 7.0}};
  CHECK_THROWS_AS(calibrate_cost_model(flat), Error);
}
