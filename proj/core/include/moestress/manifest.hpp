#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace moestress {

// Sidecar written next to every artifact a CLI subcommand produces. Holds
// everything needed to reproduce the run; the artifact itself stays free of
// timestamps and absolute paths so reruns are byte-identical.
struct RunManifest {
  std::string tool_version;
  int schema_version = 1;
  std::string subcommand;
  std::vector<std::string> argv;                     // exact args, for rerun
  std::map<std::string, std::string> args;           // flag -> value summary
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);

  void write(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

// FNV-1a 64-bit content digest as 16 hex chars. Fast fingerprint for
// manifests, not collision-resistant.
std::string fnv1a64_hex(const void* data, std::size_t size);
std::string fnv1a64_hex_of_file(const std::filesystem::path& path);

std::string iso8601_utc_now();

}  // namespace moestress
