#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moestress/arch.hpp"
#include "moestress/trace.hpp"

namespace moestress {

// Top-k pick from a gate distribution: the k largest entries (ties broken by
// lower expert index) with their weights renormalized to sum 1.
struct TopK {
  std::vector<int> experts;
  std::vector<double> weights;
};

TopK select_topk(std::span<const double> gates, int k);

struct RouterConfig {
  ModelArch arch;
  int hidden_dim = 32;
  std::uint64_t seed = 0;

  // When attractor_experts > 0 each layer gets a contiguous aligned block of
  // that many experts whose router columns share a common high-gain
  // direction, so nearly every token routes into the block. Emulates the
  // sparse vulnerable-expert structure observed in real models.
  int attractor_experts = 0;
  double attractor_gain = 8.0;
};

// Deterministic synthetic top-k gating router. All matrices are generated
// from the seed; identical seeds produce identical traces. Token embeddings
// are derived per (seed, token, component), so construction cost does not
// scale with vocabulary size.
class SyntheticRouter {
 public:
  explicit SyntheticRouter(RouterConfig config);

  const ModelArch& arch() const { return config_.arch; }
  int hidden_dim() const { return config_.hidden_dim; }
  std::uint64_t seed() const { return config_.seed; }

  std::vector<double> embedding(int token_id) const;

  // Softmax(h . W_router) with max-subtraction. Throws Error on non-finite
  // input or overflowing logits.
  std::vector<double> gate(int layer, std::span<const double> hidden) const;

  // The fixed per-layer linear mixing standing in for the transformer
  // block's effect on h between MoE layers.
  std::vector<double> advance_hidden(int layer,
                                     std::span<const double> hidden) const;

  RoutingTrace trace_for_tokens(std::span<const int> token_ids) const;
  RoutingTrace repeated_token_trace(int token_id, int length) const;

  // Trace over `length` token IDs drawn uniformly from the vocabulary,
  // deterministic per sample_seed.
  RoutingTrace sample_baseline_trace(int length, std::uint64_t sample_seed) const;

  // Attractor block chosen for `layer`; empty when the construction is off.
  const std::vector<int>& attractors(int layer) const;

  // Overrides one layer's router matrix (hidden_dim x E, row-major).
  void set_router_weights(int layer, std::vector<double> weights);

 private:
  RouterConfig config_;
  std::vector<std::vector<double>> router_weights_;  // [layer] hidden x E
  std::vector<std::vector<double>> layer_mixing_;    // [layer] hidden x hidden
  std::vector<std::vector<int>> attractors_;         // [layer]
};

// Per-layer, per-expert linear maps (hidden_dim x hidden_dim) acting as toy
// experts for the gated-combination forward pass.
class ToyExpertSet {
 public:
  ToyExpertSet(const ModelArch& arch, int hidden_dim, std::uint64_t seed);

  int hidden_dim() const { return hidden_dim_; }

  std::vector<double> apply(int layer, int expert,
                            std::span<const double> hidden) const;

  // Replaces one expert matrix (row-major hidden_dim x hidden_dim).
  void set_weights(int layer, int expert, std::vector<double> weights);

 private:
  int hidden_dim_;
  int experts_per_layer_;
  std::vector<std::vector<double>> matrices_;  // [layer * E + e]
};

// y = sum over selected experts of renormalized_weight * expert(h).
std::vector<double> toy_moe_forward(const SyntheticRouter& router,
                                    const ToyExpertSet& experts, int layer,
                                    std::span<const double> hidden);

}  // namespace moestress
