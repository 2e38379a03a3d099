#pragma once

#include <filesystem>
#include <string>

namespace moestress {

// Static architecture descriptor of an MoE model: layer count, experts per
// layer, routed experts per token, and vocabulary size.
struct ModelArch {
  std::string name;
  int layers = 0;
  int experts_per_layer = 0;
  int top_k = 0;
  int vocab_size = 0;

  // Throws ConfigError naming the violated field.
  void validate() const;

  std::string to_json() const;
};

// Parses a UTF-8 JSON document with fields
// `name, layers, experts_per_layer, top_k, vocab_size` and validates it.
ModelArch parse_arch_config(const std::string& json_text);
ModelArch load_arch_config(const std::filesystem::path& path);

}  // namespace moestress
