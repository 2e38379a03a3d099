#include "moestress/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moestress/errors.hpp"

namespace moestress {

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["tool_version"] = tool_version;
  j["subcommand"] = subcommand;
  j["argv"] = argv;
  j["args"] = args;
  j["input_digests"] = input_digests;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  RunManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.args = j.value("args", std::map<std::string, std::string>{});
    m.input_digests =
        j.value("input_digests", std::map<std::string, std::string>{});
    m.started_at = j.value("started_at", std::string{});
    m.finished_at = j.value("finished_at", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest field has wrong type: ") + e.what());
  }
  if (m.schema_version != 1) {
    throw ParseError("unsupported manifest schema_version " +
                     std::to_string(m.schema_version));
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  out << to_json() << '\n';
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string fnv1a64_hex(const void* data, std::size_t size) {
  std::uint64_t hash = 14695981039346656037ULL;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::string fnv1a64_hex_of_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for digest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  return fnv1a64_hex(content.data(), content.size());
}

std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace moestress
