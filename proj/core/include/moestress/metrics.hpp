#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moestress/deployment.hpp"
#include "moestress/router.hpp"
#include "moestress/trace.hpp"

namespace moestress {

// Theoretical maximum imbalance: worst-case single-device load over the
// ideal balanced load, |D| * min(k, E_d) / k.
double tmi(int num_devices, int experts_per_device, int top_k);

// Mean membership fraction over the experts hosted on each device at one
// layer. Throws Error if any device hosts zero experts there.
std::vector<double> device_load(const ExpertLoadProfile& profile,
                                const Deployment& deployment, int layer);

struct BottleneckReport {
  std::vector<double> per_layer_max_load;  // in [0,1]
  std::vector<int> straggler_device;       // argmax device per layer
  double bottleneck = 0.0;                 // mean of per_layer_max_load

  std::string to_json() const;
};

BottleneckReport bottleneck(const ExpertLoadProfile& profile,
                            const Deployment& deployment);

// Supplies the repeated-token routing trace for a token, or nullopt when no
// trace is available (the token is then reported as skipped).
using TraceSource = std::function<std::optional<RoutingTrace>(int token_id)>;

TraceSource repeated_trace_source(const SyntheticRouter& router,
                                  int repeat_length);
// Looks up <dir>/token_<id>.jsonl, for ingested per-token traces.
TraceSource directory_trace_source(std::filesystem::path dir);

struct CoverageReport {
  std::vector<std::pair<int, double>> per_token_bottleneck;  // token order
  std::vector<int> skipped_tokens;
  int tokens_evaluated = 0;
  double coverage = 0.0;  // arithmetic mean of per-token B

  std::string to_json() const;
  std::string to_csv() const;  // token_id,B
};

// Evaluates B(P_t) for every token in `tokens` and averages. Work is split
// across threads; the reduction always sums in token-index order, so the
// result is bit-stable regardless of num_threads.
CoverageReport coverage(const TraceSource& source, const Deployment& deployment,
                        std::span<const int> tokens, int num_threads = 0);

CoverageReport coverage(const SyntheticRouter& router,
                        const Deployment& deployment,
                        std::span<const int> tokens, int repeat_length,
                        int num_threads = 0);

// Normalized selection entropy, mean over layers, in [0,1]. Membership
// fractions are normalized by top_k so each layer forms a distribution.
// Throws Error when E == 1.
double normalized_entropy(const ExpertLoadProfile& profile);
double normalized_entropy(const RoutingTrace& trace);

// layer,expert,rho rows for heatmap plotting.
std::string profile_heatmap_csv(const ExpertLoadProfile& profile);

}  // namespace moestress
