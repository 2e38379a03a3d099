#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moestress/arch.hpp"

namespace moestress {

// Expert-parallel placement: for every layer, each expert index is assigned
// to exactly one device. The expert->device representation makes the
// partition property structural; validation covers index ranges only.
class Deployment {
 public:
  // expert_to_device[l][e] = device hosting expert e at layer l.
  Deployment(int num_devices, std::vector<std::vector<int>> expert_to_device);

  int num_devices() const { return num_devices_; }
  int num_layers() const { return static_cast<int>(map_.size()); }
  int num_experts() const {
    return map_.empty() ? 0 : static_cast<int>(map_.front().size());
  }

  int device_of(int layer, int expert) const { return map_[layer][expert]; }
  const std::vector<int>& layer_map(int layer) const { return map_[layer]; }

  // Experts hosted on each device at `layer`, ascending expert index.
  std::vector<std::vector<int>> experts_by_device(int layer) const;
  std::vector<int> device_expert_counts(int layer) const;

  bool operator==(const Deployment&) const = default;

  std::string to_json() const;
  static Deployment from_json(const std::string& json_text);

 private:
  int num_devices_;
  std::vector<std::vector<int>> map_;
};

// Index-order placement: device d hosts a contiguous block of experts, the
// same mapping at every layer. When E mod |D| != 0 the lowest-indexed
// devices take one extra expert, so counts differ by at most 1.
Deployment build_default_deployment(const ModelArch& arch, int num_devices);

void write_deployment(const Deployment& dep, const std::filesystem::path& path);
Deployment read_deployment(const std::filesystem::path& path);

}  // namespace moestress
