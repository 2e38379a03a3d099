#include "moestress/arch.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moestress/errors.hpp"

namespace moestress {

namespace {

int require_positive_int(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) {
    throw ConfigError("arch config missing field '" + key + "'");
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError("arch config field '" + key + "' must be an integer");
  }
  return v.get<int>();
}

}  // namespace

void ModelArch::validate() const {
  if (layers <= 0) throw ConfigError("arch field 'layers' must be positive");
  if (experts_per_layer <= 0) {
    throw ConfigError("arch field 'experts_per_layer' must be positive");
  }
  if (top_k <= 0) throw ConfigError("arch field 'top_k' must be positive");
  if (top_k > experts_per_layer) {
    throw ConfigError("arch field 'top_k' exceeds experts_per_layer");
  }
  if (vocab_size <= 0) {
    throw ConfigError("arch field 'vocab_size' must be positive");
  }
}

ModelArch parse_arch_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("arch config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("arch config must be a JSON object");

  ModelArch arch;
  arch.name = j.value("name", std::string{});
  arch.layers = require_positive_int(j, "layers");
  arch.experts_per_layer = require_positive_int(j, "experts_per_layer");
  arch.top_k = require_positive_int(j, "top_k");
  arch.vocab_size = require_positive_int(j, "vocab_size");
  arch.validate();
  return arch;
}

ModelArch load_arch_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open arch config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_arch_config(buf.str());
}

std::string ModelArch::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["layers"] = layers;
  j["experts_per_layer"] = experts_per_layer;
  j["top_k"] = top_k;
  j["vocab_size"] = vocab_size;
  return j.dump(2);
}

}  // namespace moestress
