#pragma once

#include <filesystem>
#include <vector>

#include "moestress/arch.hpp"

namespace moestress {

// Top-k routing decision for one (layer, token): expert indices plus their
// renormalized gate weights (non-negative, summing to 1).
struct TokenSelection {
  std::vector<int> experts;
  std::vector<double> weights;

  bool operator==(const TokenSelection&) const = default;
};

// Per-layer, per-token routing decisions. The universal exchange object
// between generation, ingestion, metrics, and latency simulation.
class RoutingTrace {
 public:
  RoutingTrace(int layers, int experts_per_layer, int top_k);

  int layers() const { return layers_; }
  int experts_per_layer() const { return experts_per_layer_; }
  int top_k() const { return top_k_; }
  int num_tokens() const { return num_tokens_; }

  const TokenSelection& selection(int layer, int token) const {
    return selections_[layer][token];
  }

  // Appends one token with its per-layer selections (size == layers()).
  // Validates entry counts, distinctness, index ranges, and weight sums.
  void append_token(const std::vector<TokenSelection>& per_layer);

  bool operator==(const RoutingTrace&) const = default;

 private:
  int layers_;
  int experts_per_layer_;
  int top_k_;
  int num_tokens_ = 0;
  std::vector<std::vector<TokenSelection>> selections_;  // [layer][token]
};

// Per-layer fraction of trace tokens whose top-k set contains each expert.
// Membership mass per layer sums to top_k.
class ExpertLoadProfile {
 public:
  ExpertLoadProfile(std::vector<std::vector<double>> rho, int top_k);

  int layers() const { return static_cast<int>(rho_.size()); }
  int experts_per_layer() const {
    return rho_.empty() ? 0 : static_cast<int>(rho_.front().size());
  }
  int top_k() const { return top_k_; }

  double rho(int layer, int expert) const { return rho_[layer][expert]; }
  const std::vector<double>& layer_rho(int layer) const { return rho_[layer]; }

 private:
  std::vector<std::vector<double>> rho_;
  int top_k_;
};

// Throws Error for an empty trace (the profile is undefined for zero tokens).
ExpertLoadProfile load_profile_from_trace(const RoutingTrace& trace);

// JSON Lines trace file. Line 1 is the header record
//   {"layers":L,"experts":E,"top_k":k,"num_tokens":N}
// and every following line is
//   {"token":i,"layer":l,"experts":[...],"weights":[...]}.
// Records may appear in any order; all N*L must be present exactly once.
RoutingTrace read_trace(const std::filesystem::path& path);
void write_trace(const RoutingTrace& trace, const std::filesystem::path& path);

}  // namespace moestress
