#include "moestress/deployment.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moestress/errors.hpp"

namespace moestress {

Deployment::Deployment(int num_devices,
                       std::vector<std::vector<int>> expert_to_device)
    : num_devices_(num_devices), map_(std::move(expert_to_device)) {
  if (num_devices_ <= 0) {
    throw ConfigError("deployment needs a positive device count");
  }
  if (map_.empty()) throw ConfigError("deployment needs at least one layer");
  const std::size_t experts = map_.front().size();
  if (experts == 0) throw ConfigError("deployment needs at least one expert");
  for (std::size_t l = 0; l < map_.size(); ++l) {
    if (map_[l].size() != experts) {
      throw ConfigError("deployment layer " + std::to_string(l) +
                        " has a mismatched expert count");
    }
    for (std::size_t e = 0; e < experts; ++e) {
      const int d = map_[l][e];
      if (d < 0 || d >= num_devices_) {
        throw ConfigError("deployment layer " + std::to_string(l) + " expert " +
                          std::to_string(e) + " maps to invalid device " +
                          std::to_string(d));
      }
    }
  }
}

std::vector<std::vector<int>> Deployment::experts_by_device(int layer) const {
  std::vector<std::vector<int>> by_device(num_devices_);
  const auto& row = map_[layer];
  for (int e = 0; e < static_cast<int>(row.size()); ++e) {
    by_device[row[e]].push_back(e);
  }
  return by_device;
}

std::vector<int> Deployment::device_expert_counts(int layer) const {
  std::vector<int> counts(num_devices_, 0);
  for (int d : map_[layer]) ++counts[d];
  return counts;
}

std::string Deployment::to_json() const {
  nlohmann::json j;
  j["num_devices"] = num_devices_;
  j["expert_to_device"] = map_;
  return j.dump(2);
}

Deployment Deployment::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("deployment is not valid JSON: ") + e.what());
  }
  if (!j.contains("num_devices") || !j.contains("expert_to_device")) {
    throw ParseError(
        "deployment needs 'num_devices' and 'expert_to_device' fields");
  }
  try {
    return Deployment(j.at("num_devices").get<int>(),
                      j.at("expert_to_device")
                          .get<std::vector<std::vector<int>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("deployment field has wrong type: ") +
                     e.what());
  }
}

Deployment build_default_deployment(const ModelArch& arch, int num_devices) {
  arch.validate();
  if (num_devices <= 0) {
    throw ConfigError("deployment needs a positive device count");
  }
  if (num_devices > arch.experts_per_layer) {
    throw ConfigError("more devices than experts per layer");
  }
  const int base = arch.experts_per_layer / num_devices;
  const int extra = arch.experts_per_layer % num_devices;

  std::vector<int> row(arch.experts_per_layer);
  int e = 0;
  for (int d = 0; d < num_devices; ++d) {
    const int count = base + (d < extra ? 1 : 0);
    for (int i = 0; i < count; ++i) row[e++] = d;
  }
  std::vector<std::vector<int>> map(arch.layers, row);
  return Deployment(num_devices, std::move(map));
}

void write_deployment(const Deployment& dep,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write deployment: " + path.string());
  out << dep.to_json() << '\n';
}

Deployment read_deployment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open deployment: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return Deployment::from_json(buf.str());
}

}  // namespace moestress
