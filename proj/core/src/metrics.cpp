#include "moestress/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fmt.hpp"
#include "moestress/errors.hpp"
#include "parallel.hpp"

namespace moestress {

double tmi(int num_devices, int experts_per_device, int top_k) {
  if (num_devices <= 0 || experts_per_device <= 0 || top_k <= 0) {
    throw Error("tmi arguments must be positive");
  }
  return num_devices * static_cast<double>(std::min(top_k, experts_per_device)) /
         top_k;
}

namespace {

void check_consistent(const ExpertLoadProfile& profile,
                      const Deployment& deployment) {
  if (profile.layers() != deployment.num_layers() ||
      profile.experts_per_layer() != deployment.num_experts()) {
    throw Error("profile shape " + std::to_string(profile.layers()) + "x" +
                std::to_string(profile.experts_per_layer()) +
                " does not match deployment " +
                std::to_string(deployment.num_layers()) + "x" +
                std::to_string(deployment.num_experts()));
  }
}

}  // namespace

std::vector<double> device_load(const ExpertLoadProfile& profile,
                                const Deployment& deployment, int layer) {
  check_consistent(profile, deployment);
  if (layer < 0 || layer >= profile.layers()) {
    throw Error("layer index out of range");
  }
  const auto by_device = deployment.experts_by_device(layer);
  std::vector<double> loads(deployment.num_devices(), 0.0);
  for (int d = 0; d < deployment.num_devices(); ++d) {
    if (by_device[d].empty()) {
      throw Error("device " + std::to_string(d) +
                  " hosts zero experts at layer " + std::to_string(layer));
    }
    double sum = 0.0;
    for (int e : by_device[d]) sum += profile.rho(layer, e);
    loads[d] = sum / static_cast<double>(by_device[d].size());
  }
  return loads;
}

BottleneckReport bottleneck(const ExpertLoadProfile& profile,
                            const Deployment& deployment) {
  BottleneckReport report;
  report.per_layer_max_load.reserve(profile.layers());
  report.straggler_device.reserve(profile.layers());
  double sum = 0.0;
  for (int l = 0; l < profile.layers(); ++l) {
    const std::vector<double> loads = device_load(profile, deployment, l);
    int argmax = 0;
    for (int d = 1; d < static_cast<int>(loads.size()); ++d) {
      if (loads[d] > loads[argmax]) argmax = d;
    }
    report.per_layer_max_load.push_back(loads[argmax]);
    report.straggler_device.push_back(argmax);
    sum += loads[argmax];
  }
  report.bottleneck = sum / profile.layers();
  return report;
}

std::string BottleneckReport::to_json() const {
  nlohmann::json j;
  j["bottleneck"] = bottleneck;
  j["per_layer_max_load"] = per_layer_max_load;
  j["straggler_device"] = straggler_device;
  return j.dump(2);
}

TraceSource repeated_trace_source(const SyntheticRouter& router,
                                  int repeat_length) {
  if (repeat_length < 1) throw Error("repeat_length must be >= 1");
  // The router is copied so the source owns everything it needs.
  return [router, repeat_length](int token_id) -> std::optional<RoutingTrace> {
    return router.repeated_token_trace(token_id, repeat_length);
  };
}

TraceSource directory_trace_source(std::filesystem::path dir) {
  return [dir = std::move(dir)](int token_id) -> std::optional<RoutingTrace> {
    const std::filesystem::path path =
        dir / ("token_" + std::to_string(token_id) + ".jsonl");
    if (!std::filesystem::exists(path)) return std::nullopt;
    return read_trace(path);
  };
}

CoverageReport coverage(const TraceSource& source, const Deployment& deployment,
                        std::span<const int> tokens, int num_threads) {
  if (tokens.empty()) throw Error("coverage needs a non-empty token subset");

  const int n = static_cast<int>(tokens.size());
  std::vector<std::optional<double>> results(n);
  detail::parallel_for(n, num_threads, [&](int i) {
    const std::optional<RoutingTrace> trace = source(tokens[i]);
    if (!trace.has_value() || trace->num_tokens() == 0) return;
    const ExpertLoadProfile profile = load_profile_from_trace(*trace);
    results[i] = bottleneck(profile, deployment).bottleneck;
  });

  CoverageReport report;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {  // token-index order: bit-stable reduction
    if (results[i].has_value()) {
      report.per_token_bottleneck.emplace_back(tokens[i], *results[i]);
      sum += *results[i];
    } else {
      report.skipped_tokens.push_back(tokens[i]);
    }
  }
  report.tokens_evaluated = static_cast<int>(report.per_token_bottleneck.size());
  if (report.tokens_evaluated == 0) {
    throw Error("coverage undefined: every requested token was skipped");
  }
  report.coverage = sum / report.tokens_evaluated;
  return report;
}

CoverageReport coverage(const SyntheticRouter& router,
                        const Deployment& deployment,
                        std::span<const int> tokens, int repeat_length,
                        int num_threads) {
  return coverage(repeated_trace_source(router, repeat_length), deployment,
                  tokens, num_threads);
}

std::string CoverageReport::to_json() const {
  nlohmann::json j;
  j["coverage"] = coverage;
  j["tokens_evaluated"] = tokens_evaluated;
  j["skipped_tokens"] = skipped_tokens;
  nlohmann::json per_token = nlohmann::json::array();
  for (const auto& [token, b] : per_token_bottleneck) {
    per_token.push_back({{"token", token}, {"B", b}});
  }
  j["per_token_bottleneck"] = std::move(per_token);
  return j.dump(2);
}

std::string CoverageReport::to_csv() const {
  std::ostringstream out;
  out << "token_id,B\n";
  for (const auto& [token, b] : per_token_bottleneck) {
    out << token << ',' << detail::fmt_double(b) << '\n';
  }
  return out.str();
}

namespace {

double layer_entropy(const std::vector<double>& rho, int top_k) {
  const int experts = static_cast<int>(rho.size());
  double h = 0.0;
  for (double r : rho) {
    const double p = r / top_k;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(experts));
}

}  // namespace

double normalized_entropy(const ExpertLoadProfile& profile) {
  if (profile.experts_per_layer() < 2) {
    throw Error("normalized entropy undefined for a single expert");
  }
  double sum = 0.0;
  for (int l = 0; l < profile.layers(); ++l) {
    sum += layer_entropy(profile.layer_rho(l), profile.top_k());
  }
  return sum / profile.layers();
}

double normalized_entropy(const RoutingTrace& trace) {
  return normalized_entropy(load_profile_from_trace(trace));
}

std::string profile_heatmap_csv(const ExpertLoadProfile& profile) {
  std::ostringstream out;
  out << "layer,expert,rho\n";
  for (int l = 0; l < profile.layers(); ++l) {
    for (int e = 0; e < profile.experts_per_layer(); ++e) {
      out << l << ',' << e << ',' << detail::fmt_double(profile.rho(l, e))
          << '\n';
    }
  }
  return out.str();
}

}  // namespace moestress
