#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moestress/deployment.hpp"
#include "moestress/trace.hpp"

namespace moestress {

// Linear cost model for one prefill pass: grouped-GEMM time scales with the
// number of token-routings assigned to a device, everything else is a
// constant per layer or per token.
struct CostModel {
  double per_token_expert_cost = 1.0;
  double per_layer_fixed_cost = 0.0;
  double allreduce_cost = 0.0;
  double attention_cost_per_token = 0.0;

  void validate() const;
};

CostModel load_cost_model(const std::filesystem::path& path);

struct TimelineReport {
  std::vector<std::vector<double>> device_busy;  // [layer][device]
  std::vector<std::vector<double>> device_idle;  // max busy - busy, >= 0
  std::vector<double> layer_moe_time;            // max busy + allreduce
  std::vector<double> straggler_busy;            // MoE time on bottleneck GPU
  std::vector<int> straggler_device;
  double total_prefill_time = 0.0;
  int num_tokens = 0;
  int num_devices = 0;

  std::string to_json() const;
  std::string timeline_csv() const;  // layer,device,busy,idle rows
};

TimelineReport simulate_prefill(const RoutingTrace& trace,
                                const Deployment& deployment,
                                const CostModel& cost);

// Latency amplification of the bottleneck device's MoE time, attack over
// normal, at one layer / averaged across layers (ratio of layer means).
double r_moe(const TimelineReport& attack, const TimelineReport& normal,
             int layer);
double r_moe_mean(const TimelineReport& attack, const TimelineReport& normal);

struct CostFit {
  CostModel model;
  std::vector<double> residuals;
  double max_abs_residual = 0.0;
};

// Least-squares line through (token_count, observed_time) samples; slope is
// per_token_expert_cost, intercept per_layer_fixed_cost. Needs >= 2 samples
// with distinct token counts.
CostFit calibrate_cost_model(
    std::span<const std::pair<double, double>> samples);

}  // namespace moestress
