#include <doctest.h>

#include <utility>
#include <vector>

#include "moestress/errors.hpp"
#include "moestress/probe.hpp"

using namespace moestress;

TEST_CASE("ratio point estimate is the ratio of arm means") {
  const std::vector<double> attack{30.0, 30.0, 30.0};
  const std::vector<double> normal{10.0, 10.0, 10.0};
  const RatioEstimate r = r_api_ci(attack, normal, 1000, 0.95, 1);
  CHECK(r.point == 3.0);
  // Constant arms: every resample gives the same ratio.
  CHECK(r.lower == 3.0);
  CHECK(r.attack_n == 3);
  CHECK(r.normal_n == 3);
}

TEST_CASE("scaling one arm scales the ratio") {
  const std::vector<double> normal{8.0, 12.0, 9.0, 11.0};
  std::vector<double> attack;
  for (double x : normal) attack.push_back(2.0 * x);
  const RatioEstimate r = r_api_ci(attack, normal, 2000, 0.95, 7);
  CHECK(r.point == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.lower <= r.point);
  CHECK(r.lower > 1.0);  // spread is small relative to the gap
}

TEST_CASE("bootstrap lower bound is deterministic per seed") {
  const std::vector<double> attack{25.0, 31.0, 28.0, 35.0};
  const std::vector<double> normal{9.0, 11.0, 10.0, 12.0};
  const RatioEstimate a = r_api_ci(attack, normal, 5000, 0.95, 42);
  const RatioEstimate b = r_api_ci(attack, normal, 5000, 0.95, 42);
  CHECK(a.lower == b.lower);
  const RatioEstimate c = r_api_ci(attack, normal, 5000, 0.95, 43);
  CHECK(a.point == c.point);  // the point estimate ignores the seed
}

TEST_CASE("higher confidence can only lower the bound") {
  const std::vector<double> attack{25.0, 31.0, 28.0, 35.0, 30.0, 26.0};
  const std::vector<double> normal{9.0, 11.0, 10.0, 12.0, 9.5, 10.5};
  const RatioEstimate lo = r_api_ci(attack, normal, 20000, 0.90, 42);
  const RatioEstimate hi = r_api_ci(attack, normal, 20000, 0.99, 42);
  CHECK(hi.lower <= lo.lower);
  CHECK(lo.lower <= lo.point);
}

TEST_CASE("ratio estimation validates its inputs") {
  const std::vector<double> some{1.0, 2.0};
  const std::vector<double> none;
  CHECK_THROWS_AS(r_api_ci(none, some, 100, 0.95, 1), Error);
  CHECK_THROWS_AS(r_api_ci(some, none, 100, 0.95, 1), Error);
  CHECK_THROWS_AS(r_api_ci(some, some, 0, 0.95, 1), Error);
  CHECK_THROWS_AS(r_api_ci(some, some, 100, 0.0, 1), Error);
  CHECK_THROWS_AS(r_api_ci(some, some, 100, 1.0, 1), Error);
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(r_api_ci(some, zeros, 100, 0.95, 1), Error);
}

TEST_CASE("backend classification thresholds") {
  ProbeOptions opts;  // moe 1.4, dense 1.2

  const auto estimate = [](double point, double lower) {
    RatioEstimate r;
    r.point = point;
    r.lower = lower;
    r.attack_n = 8;
    r.normal_n = 8;
    return r;
  };

  CHECK(classify_backend(estimate(3.063, 2.8), opts) ==
        BackendClass::moe_like);
  CHECK(classify_backend(estimate(0.635, 0.52), opts) ==
        BackendClass::dense_like);
  // Point above dense but lower bound under the moe threshold: undecided.
  CHECK(classify_backend(estimate(1.3, 1.0), opts) ==
        BackendClass::indeterminate);
  // The moe threshold is inclusive on the lower bound.
  CHECK(classify_backend(estimate(2.0, 1.4), opts) == BackendClass::moe_like);
  // Without samples there is nothing to classify.
  RatioEstimate empty;
  empty.point = 3.0;
  empty.lower = 2.0;
  CHECK(classify_backend(empty, opts) == BackendClass::indeterminate);
}

TEST_CASE("classification rejects inverted thresholds") {
  ProbeOptions opts;
  opts.moe_threshold = 1.1;
  opts.dense_threshold = 1.2;
  RatioEstimate r;
  r.point = 1.0;
  r.lower = 0.9;
  CHECK_THROWS_AS(classify_backend(r, opts), ConfigError);
}

TEST_CASE("verdict and backend names") {
  CHECK(to_string(Verdict::vulnerable) == "vulnerable");
  CHECK(to_string(Verdict::not_vulnerable) == "not-vulnerable");
  CHECK(to_string(Verdict::inconclusive) == "inconclusive");
  CHECK(to_string(BackendClass::moe_like) == "moe-likely");
  CHECK(to_string(BackendClass::dense_like) == "dense-likely");
  CHECK(to_string(BackendClass::indeterminate) == "inconclusive");
}

TEST_CASE("EP estimation interpolates against a reference table") {
  const std::vector<std::pair<int, double>> table{
      {2, 1.48}, {4, 2.26}, {8, 4.25}};

  SUBCASE("ratio beyond the table exceeds the largest EP") {
    const EpEstimate e = estimate_ep_size(4.728, table);
    CHECK(e.exceeds_table);
    CHECK(e.to_string() == "> 8");
  }
  SUBCASE("exact table ratio maps to its EP") {
    const EpEstimate e = estimate_ep_size(4.25, table);
    CHECK_FALSE(e.exceeds_table);
    CHECK(e.ep == 8);
    CHECK(e.to_string() == "8");
  }
  SUBCASE("mid-table ratio maps to the first EP at or above it") {
    const EpEstimate e = estimate_ep_size(2.0, table);
    CHECK(e.ep == 4);
    CHECK(e.to_string() == "4");
  }
  SUBCASE("ratio below the table reports at most the smallest EP") {
    const EpEstimate e = estimate_ep_size(1.2, table);
    CHECK(e.below_table);
    CHECK(e.to_string() == "<= 2");
  }
}

TEST_CASE("EP estimation validates the table") {
  const std::vector<std::pair<int, double>> unsorted{{4, 2.26}, {2, 1.48}};
  CHECK_THROWS_AS(estimate_ep_size(2.0, unsorted), ConfigError);
  const std::vector<std::pair<int, double>> non_monotone{
      {2, 2.0}, {4, 1.5}};
  CHECK_THROWS_AS(estimate_ep_size(2.0, non_monotone), ConfigError);
  const std::vector<std::pair<int, double>> empty;
  CHECK_THROWS_AS(estimate_ep_size(2.0, empty), ConfigError);
}
