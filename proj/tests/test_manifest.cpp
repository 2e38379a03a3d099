#include <doctest.h>

#include <fstream>
#include <string>

#include "moestress/errors.hpp"
#include "moestress/manifest.hpp"
#include "temp_dir.hpp"

using namespace moestress;

TEST_CASE("fnv1a64 matches reference digests") {
  CHECK(fnv1a64_hex("", 0) == "cbf29ce484222325");
  CHECK(fnv1a64_hex("a", 1) == "af63dc4c8601ec8c");
  const std::string s = "hello world";
  CHECK(fnv1a64_hex(s.data(), s.size()) == "779a65e7023cd2e7");
}

TEST_CASE("file digest equals buffer digest of the same bytes") {
  TempDir tmp;
  const auto p = tmp.file("data.bin");
  const std::string payload = "hello world";
  {
    std::ofstream out(p, std::ios::binary);
    out << payload;
  }
  CHECK(fnv1a64_hex_of_file(p) == fnv1a64_hex(payload.data(), payload.size()));
  CHECK_THROWS_AS(fnv1a64_hex_of_file(tmp.file("missing")), Error);
}

TEST_CASE("manifest JSON round-trip preserves every field") {
  RunManifest m;
  m.subcommand = "trace";
  m.argv = {"trace", "--mode", "repeat", "--out", "t.jsonl"};
  m.args = {{"--mode", "repeat"}, {"--out", "t.jsonl"}};
  m.input_digests = {{"in.json", "cbf29ce484222325"}};
  m.started_at = "2026-01-02T03:04:05Z";
  m.finished_at = "2026-01-02T03:04:06Z";

  const RunManifest back = RunManifest::from_json(m.to_json());
  CHECK(back.subcommand == m.subcommand);
  CHECK(back.argv == m.argv);
  CHECK(back.args == m.args);
  CHECK(back.input_digests == m.input_digests);
  CHECK(back.started_at == m.started_at);
  CHECK(back.finished_at == m.finished_at);
  CHECK(back.schema_version == 1);
  CHECK(back.tool_version == m.tool_version);
}

TEST_CASE("manifest file round-trip") {
  TempDir tmp;
  RunManifest m;
  m.subcommand = "filter";
  m.argv = {"filter", "--tokens", "1,2,3", "--out", "f.json"};
  const auto p = tmp.file("run.manifest.json");
  m.write(p);
  const RunManifest back = RunManifest::load(p);
  CHECK(back.subcommand == "filter");
  CHECK(back.argv == m.argv);
}

TEST_CASE("unknown schema versions are rejected") {
  RunManifest m;
  m.subcommand = "trace";
  std::string json = m.to_json();
  const auto pos = json.find("\"schema_version\": 1");
  REQUIRE(pos != std::string::npos);
  json.replace(pos, 19, "\"schema_version\": 2");
  CHECK_THROWS_AS(RunManifest::from_json(json), Error);
}

TEST_CASE("timestamps are ISO-8601 UTC") {
  const std::string t = iso8601_utc_now();
  REQUIRE(t.size() == 20);
  CHECK(t[4] == '-');
  CHECK(t[7] == '-');
  CHECK(t[10] == 'T');
  CHECK(t[13] == ':');
  CHECK(t[16] == ':');
  CHECK(t[19] == 'Z');
}
