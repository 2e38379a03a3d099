#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moestress/deployment.hpp"
#include "moestress/metrics.hpp"

namespace moestress {

// v[l][e] = number of scanned tokens whose repeated-token profile puts a
// membership fraction >= tau on expert e at layer l.
struct VulnerabilityMap {
  std::vector<std::vector<int>> v;  // [layer][expert]
  double tau = 0.9;
  int tokens_scanned = 0;
  std::vector<int> skipped_tokens;

  int layers() const { return static_cast<int>(v.size()); }
  int experts_per_layer() const {
    return v.empty() ? 0 : static_cast<int>(v.front().size());
  }

  std::string to_json() const;
  static VulnerabilityMap from_json(const std::string& json_text);
};

VulnerabilityMap vulnerability_scan(const TraceSource& source,
                                    std::span<const int> tokens, double tau,
                                    int num_threads = 0);
VulnerabilityMap vulnerability_scan(const SyntheticRouter& router,
                                    std::span<const int> tokens,
                                    int repeat_length, double tau,
                                    int num_threads = 0);

// Greedy vulnerability-aware placement for one layer: experts sorted by
// descending v (ties to the lower index), each assigned to the device with
// the smallest accumulated vulnerability (ties to the lower index) that has
// remaining capacity E/|D|. Requires E divisible by num_devices.
std::vector<int> balance_by_vulnerability(const VulnerabilityMap& vmap,
                                          int layer, int num_devices);

// Runs the greedy placement independently per layer.
Deployment vulnerability_aware_deployment(const VulnerabilityMap& vmap,
                                          int num_devices);

struct DefenseEvaluation {
  CoverageReport before;  // default index-order deployment
  CoverageReport after;   // vulnerability-aware deployment

  std::string to_csv() const;  // token_id,B_before,B_after
};

DefenseEvaluation evaluate_defense(const TraceSource& source,
                                   const VulnerabilityMap& vmap,
                                   int num_devices, std::span<const int> tokens,
                                   int num_threads = 0);

// Repetition score: exp of the unigram Shannon entropy of the sequence.
// 1.0 for a single repeated token, at most the number of distinct tokens.
// A stand-in for screening-model perplexity; the separation property it
// preserves is repetition -> minimal score.
double ppl_proxy(std::span<const int> token_ids);

struct FilterDecision {
  double score = 0.0;
  bool accept = false;
};

// Rejects iff ppl_proxy(token_ids) < threshold (strictly less).
FilterDecision filter_prompt(std::span<const int> token_ids,
                             double threshold = 2.0);

}  // namespace moestress
