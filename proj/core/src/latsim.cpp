#include "moestress/latsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fmt.hpp"
#include "moestress/errors.hpp"

namespace moestress {

void CostModel::validate() const {
  if (!(per_token_expert_cost > 0.0)) {
    throw ConfigError("cost field 'per_token_expert_cost' must be positive");
  }
  if (per_layer_fixed_cost < 0.0 || allreduce_cost < 0.0 ||
      attention_cost_per_token < 0.0) {
    throw ConfigError("cost model fields must be non-negative");
  }
}

CostModel load_cost_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cost model: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("cost model is not valid JSON: ") + e.what());
  }
  CostModel cost;
  try {
    cost.per_token_expert_cost =
        j.value("per_token_expert_cost", cost.per_token_expert_cost);
    cost.per_layer_fixed_cost =
        j.value("per_layer_fixed_cost", cost.per_layer_fixed_cost);
    cost.allreduce_cost = j.value("allreduce_cost", cost.allreduce_cost);
    cost.attention_cost_per_token =
        j.value("attention_cost_per_token", cost.attention_cost_per_token);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cost model field has wrong type: ") +
                      e.what());
  }
  cost.validate();
  return cost;
}

TimelineReport simulate_prefill(const RoutingTrace& trace,
                                const Deployment& deployment,
                                const CostModel& cost) {
  cost.validate();
  const int L = deployment.num_layers();
  const int D = deployment.num_devices();
  if (trace.num_tokens() > 0 &&
      (trace.layers() != L || trace.experts_per_layer() != deployment.num_experts())) {
    throw Error("trace shape " + std::to_string(trace.layers()) + "x" +
                std::to_string(trace.experts_per_layer()) +
                " does not match deployment " + std::to_string(L) + "x" +
                std::to_string(deployment.num_experts()));
  }

  TimelineReport report;
  report.num_tokens = trace.num_tokens();
  report.num_devices = D;
  report.device_busy.assign(L, std::vector<double>(D, 0.0));
  report.device_idle.assign(L, std::vector<double>(D, 0.0));
  report.layer_moe_time.assign(L, 0.0);
  report.straggler_busy.assign(L, 0.0);
  report.straggler_device.assign(L, 0);
  if (trace.num_tokens() == 0) return report;

  for (int l = 0; l < L; ++l) {
    std::vector<long long> assigned(D, 0);
    for (int t = 0; t < trace.num_tokens(); ++t) {
      for (int e : trace.selection(l, t).experts) {
        ++assigned[deployment.device_of(l, e)];
      }
    }
    auto& busy = report.device_busy[l];
    int straggler = 0;
    for (int d = 0; d < D; ++d) {
      busy[d] = cost.per_layer_fixed_cost +
                cost.per_token_expert_cost * static_cast<double>(assigned[d]);
      if (busy[d] > busy[straggler]) straggler = d;
    }
    for (int d = 0; d < D; ++d) report.device_idle[l][d] = busy[straggler] - busy[d];
    report.straggler_device[l] = straggler;
    report.straggler_busy[l] = busy[straggler];
    report.layer_moe_time[l] = busy[straggler] + cost.allreduce_cost;
    report.total_prefill_time +=
        cost.attention_cost_per_token * trace.num_tokens() +
        report.layer_moe_time[l];
  }
  return report;
}

namespace {

void check_comparable(const TimelineReport& attack,
                      const TimelineReport& normal) {
  if (attack.num_tokens != normal.num_tokens) {
    throw Error("latency ratio needs equal token counts, got " +
                std::to_string(attack.num_tokens) + " vs " +
                std::to_string(normal.num_tokens));
  }
  if (attack.num_devices != normal.num_devices ||
      attack.straggler_busy.size() != normal.straggler_busy.size()) {
    throw Error("latency ratio needs reports from the same deployment");
  }
}

}  // namespace

double r_moe(const TimelineReport& attack, const TimelineReport& normal,
             int layer) {
  check_comparable(attack, normal);
  if (layer < 0 || layer >= static_cast<int>(attack.straggler_busy.size())) {
    throw Error("layer index out of range");
  }
  const double denom = normal.straggler_busy[layer];
  if (denom <= 0.0) throw Error("zero bottleneck time in the normal report");
  return attack.straggler_busy[layer] / denom;
}

double r_moe_mean(const TimelineReport& attack, const TimelineReport& normal) {
  check_comparable(attack, normal);
  double num = 0.0, denom = 0.0;
  for (double x : attack.straggler_busy) num += x;
  for (double x : normal.straggler_busy) denom += x;
  if (denom <= 0.0) throw Error("zero bottleneck time in the normal report");
  return num / denom;
}

std::string TimelineReport::to_json() const {
  nlohmann::json j;
  j["num_tokens"] = num_tokens;
  j["num_devices"] = num_devices;
  j["total_prefill_time"] = total_prefill_time;
  j["layer_moe_time"] = layer_moe_time;
  j["straggler_busy"] = straggler_busy;
  j["straggler_device"] = straggler_device;
  j["device_busy"] = device_busy;
  j["device_idle"] = device_idle;
  return j.dump(2);
}

std::string TimelineReport::timeline_csv() const {
  std::ostringstream out;
  out << "layer,device,busy,idle\n";
  for (std::size_t l = 0; l < device_busy.size(); ++l) {
    for (std::size_t d = 0; d < device_busy[l].size(); ++d) {
      out << l << ',' << d << ',' << detail::fmt_double(device_busy[l][d])
          << ',' << detail::fmt_double(device_idle[l][d]) << '\n';
    }
  }
  return out.str();
}

CostFit calibrate_cost_model(
    std::span<const std::pair<double, double>> samples) {
  if (samples.size() < 2) {
    throw Error("cost calibration needs at least 2 samples");
  }
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& [x, y] : samples) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= samples.size();
  mean_y /= samples.size();

  double var_x = 0.0, cov_xy = 0.0;
  for (const auto& [x, y] : samples) {
    var_x += (x - mean_x) * (x - mean_x);
    cov_xy += (x - mean_x) * (y - mean_y);
  }
  if (var_x == 0.0) {
    throw Error("cost calibration needs samples with distinct token counts");
  }
  const double slope = cov_xy / var_x;
  const double intercept = mean_y - slope * mean_x;

  CostFit fit;
  fit.model.per_token_expert_cost = slope;
  fit.model.per_layer_fixed_cost = intercept;
  fit.model.allreduce_cost = 0.0;
  fit.model.attention_cost_per_token = 0.0;
  fit.residuals.reserve(samples.size());
  for (const auto& [x, y] : samples) {
    const double r = y - (intercept + slope * x);
    fit.residuals.push_back(r);
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(r));
  }
  return fit;
}

}  // namespace moestress
