#include <doctest.h>

#include <vector>

#include "moestress/deployment.hpp"
#include "moestress/errors.hpp"
#include "temp_dir.hpp"

using namespace moestress;

namespace {

ModelArch make_arch(int layers, int experts) {
  ModelArch a;
  a.layers = layers;
  a.experts_per_layer = experts;
  a.top_k = 1;
  a.vocab_size = 100;
  return a;
}

}  // namespace

TEST_CASE("default deployment splits 8 experts over 2 devices contiguously") {
  const Deployment d = build_default_deployment(make_arch(2, 8), 2);
  CHECK(d.num_devices() == 2);
  CHECK(d.num_layers() == 2);
  for (int l = 0; l < 2; ++l) {
    CHECK(d.layer_map(l) == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
  }
}

TEST_CASE("one device per expert gives the identity mapping") {
  const Deployment d = build_default_deployment(make_arch(1, 8), 8);
  CHECK(d.layer_map(0) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("uneven split gives low devices one extra expert") {
  const Deployment d = build_default_deployment(make_arch(1, 6), 4);
  CHECK(d.device_expert_counts(0) == std::vector<int>{2, 2, 1, 1});
}

TEST_CASE("more devices than experts is a config error") {
  CHECK_THROWS_AS(build_default_deployment(make_arch(1, 4), 5), ConfigError);
  CHECK_THROWS_AS(build_default_deployment(make_arch(1, 4), 0), ConfigError);
}

TEST_CASE("experts_by_device lists ascending expert indices") {
  const Deployment d(2, {{1, 0, 1, 0}});
  const auto by_dev = d.experts_by_device(0);
  REQUIRE(by_dev.size() == 2);
  CHECK(by_dev[0] == std::vector<int>{1, 3});
  CHECK(by_dev[1] == std::vector<int>{0, 2});
}

TEST_CASE("deployment rejects out-of-range device indices") {
  CHECK_THROWS_AS(Deployment(2, {{0, 1, 2}}), ConfigError);
  CHECK_THROWS_AS(Deployment(2, {{0, -1}}), ConfigError);
  CHECK_THROWS_AS(Deployment(0, {{}}), ConfigError);
}

TEST_CASE("deployment rejects ragged layer maps") {
  CHECK_THROWS_AS(Deployment(2, {{0, 1}, {0, 1, 1}}), ConfigError);
}

TEST_CASE("deployment JSON round-trip is identity") {
  const Deployment d(3, {{0, 1, 2, 0}, {2, 2, 1, 0}});
  const Deployment e = Deployment::from_json(d.to_json());
  CHECK(e == d);
}

TEST_CASE("deployment file round-trip is identity") {
  TempDir tmp;
  const Deployment d(2, {{0, 1, 1, 0}});
  const auto p = tmp.file("dep.json");
  write_deployment(d, p);
  CHECK(read_deployment(p) == d);
}
