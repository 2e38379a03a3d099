#include "moestress/defense.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fmt.hpp"
#include "moestress/errors.hpp"
#include "parallel.hpp"

namespace moestress {

std::string VulnerabilityMap::to_json() const {
  nlohmann::json j;
  j["tau"] = tau;
  j["tokens_scanned"] = tokens_scanned;
  j["skipped_tokens"] = skipped_tokens;
  j["v"] = v;
  return j.dump(2);
}

VulnerabilityMap VulnerabilityMap::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("vulnerability map is not valid JSON: ") +
                     e.what());
  }
  VulnerabilityMap map;
  try {
    map.tau = j.at("tau").get<double>();
    map.tokens_scanned = j.at("tokens_scanned").get<int>();
    map.v = j.at("v").get<std::vector<std::vector<int>>>();
    map.skipped_tokens =
        j.value("skipped_tokens", std::vector<int>{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vulnerability map field has wrong type: ") +
                     e.what());
  }
  for (const auto& layer : map.v) {
    if (layer.size() != map.v.front().size()) {
      throw ParseError("vulnerability map rows have mismatched lengths");
    }
    for (int x : layer) {
      if (x < 0 || x > map.tokens_scanned) {
        throw ParseError("vulnerability count outside [0, tokens_scanned]");
      }
    }
  }
  return map;
}

namespace {

void scan_into(VulnerabilityMap& map, const TraceSource& source,
               std::span<const int> tokens, int num_threads) {
  const int n = static_cast<int>(tokens.size());
  // Each slot holds the (layer, expert) pairs at or above tau for one token;
  // nullopt marks a skipped token.
  std::vector<std::optional<std::vector<std::pair<int, int>>>> hits(n);
  detail::parallel_for(n, num_threads, [&](int i) {
    const std::optional<RoutingTrace> trace = source(tokens[i]);
    if (!trace.has_value() || trace->num_tokens() == 0) return;
    const ExpertLoadProfile profile = load_profile_from_trace(*trace);
    std::vector<std::pair<int, int>> local;
    for (int l = 0; l < profile.layers(); ++l) {
      for (int e = 0; e < profile.experts_per_layer(); ++e) {
        if (profile.rho(l, e) >= map.tau) local.emplace_back(l, e);
      }
    }
    hits[i] = std::move(local);
  });

  for (int i = 0; i < n; ++i) {
    if (!hits[i].has_value()) {
      map.skipped_tokens.push_back(tokens[i]);
      continue;
    }
    ++map.tokens_scanned;
    for (const auto& [l, e] : *hits[i]) {
      if (l >= map.layers() ||
          (!map.v.empty() && e >= map.experts_per_layer())) {
        throw Error("scanned trace shape does not match the vulnerability map");
      }
      ++map.v[l][e];
    }
  }
}

// First available trace fixes the map dimensions when the caller cannot.
void size_from_first_trace(VulnerabilityMap& map, const TraceSource& source,
                           std::span<const int> tokens) {
  for (int token : tokens) {
    const std::optional<RoutingTrace> trace = source(token);
    if (trace.has_value() && trace->num_tokens() > 0) {
      map.v.assign(trace->layers(),
                   std::vector<int>(trace->experts_per_layer(), 0));
      return;
    }
  }
}

}  // namespace

VulnerabilityMap vulnerability_scan(const TraceSource& source,
                                    std::span<const int> tokens, double tau,
                                    int num_threads) {
  if (!(tau > 0.0) || tau > 1.0) throw ConfigError("tau must be in (0, 1]");
  VulnerabilityMap map;
  map.tau = tau;
  if (tokens.empty()) return map;
  size_from_first_trace(map, source, tokens);
  if (map.v.empty()) {
    // No token had a trace: an all-skipped, zero-dimension map.
    map.skipped_tokens.assign(tokens.begin(), tokens.end());
    return map;
  }
  scan_into(map, source, tokens, num_threads);
  return map;
}

VulnerabilityMap vulnerability_scan(const SyntheticRouter& router,
                                    std::span<const int> tokens,
                                    int repeat_length, double tau,
                                    int num_threads) {
  if (!(tau > 0.0) || tau > 1.0) throw ConfigError("tau must be in (0, 1]");
  VulnerabilityMap map;
  map.tau = tau;
  map.v.assign(router.arch().layers,
               std::vector<int>(router.arch().experts_per_layer, 0));
  if (tokens.empty()) return map;
  scan_into(map, repeated_trace_source(router, repeat_length), tokens,
            num_threads);
  return map;
}

std::vector<int> balance_by_vulnerability(const VulnerabilityMap& vmap,
                                          int layer, int num_devices) {
  if (layer < 0 || layer >= vmap.layers()) {
    throw Error("layer index out of range");
  }
  if (num_devices <= 0) throw ConfigError("device count must be positive");
  const int experts = vmap.experts_per_layer();
  if (experts % num_devices != 0) {
    throw ConfigError("expert count " + std::to_string(experts) +
                      " not divisible by " + std::to_string(num_devices) +
                      " devices; per-device capacity undefined");
  }
  const int capacity = experts / num_devices;
  const std::vector<int>& v = vmap.v[layer];

  std::vector<int> order(experts);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;  // ties to the lower expert index
  });

  std::vector<int> assignment(experts, -1);
  std::vector<long long> device_v(num_devices, 0);
  std::vector<int> device_count(num_devices, 0);
  for (int e : order) {
    int best = -1;
    for (int d = 0; d < num_devices; ++d) {
      if (device_count[d] >= capacity) continue;
      if (best < 0 || device_v[d] < device_v[best]) best = d;
      // equal loads keep the lower device index: strict < above
    }
    assignment[e] = best;
    device_v[best] += v[e];
    ++device_count[best];
  }
  return assignment;
}

Deployment vulnerability_aware_deployment(const VulnerabilityMap& vmap,
                                          int num_devices) {
  if (vmap.layers() == 0) {
    throw Error("vulnerability map is empty; nothing to place");
  }
  std::vector<std::vector<int>> map;
  map.reserve(vmap.layers());
  for (int l = 0; l < vmap.layers(); ++l) {
    map.push_back(balance_by_vulnerability(vmap, l, num_devices));
  }
  return Deployment(num_devices, std::move(map));
}

namespace {

Deployment index_order_deployment(int layers, int experts, int num_devices) {
  const int base = experts / num_devices;
  const int extra = experts % num_devices;
  std::vector<int> row(experts);
  int e = 0;
  for (int d = 0; d < num_devices; ++d) {
    const int count = base + (d < extra ? 1 : 0);
    for (int i = 0; i < count; ++i) row[e++] = d;
  }
  return Deployment(num_devices, std::vector<std::vector<int>>(layers, row));
}

}  // namespace

DefenseEvaluation evaluate_defense(const TraceSource& source,
                                   const VulnerabilityMap& vmap,
                                   int num_devices, std::span<const int> tokens,
                                   int num_threads) {
  if (vmap.layers() == 0) {
    throw Error("vulnerability map is empty; nothing to evaluate");
  }
  DefenseEvaluation eval;
  const Deployment before = index_order_deployment(
      vmap.layers(), vmap.experts_per_layer(), num_devices);
  const Deployment after = vulnerability_aware_deployment(vmap, num_devices);
  eval.before = coverage(source, before, tokens, num_threads);
  eval.after = coverage(source, after, tokens, num_threads);
  return eval;
}

std::string DefenseEvaluation::to_csv() const {
  // Same source and token list on both sides, but join defensively by ID.
  std::map<int, double> after_by_token(after.per_token_bottleneck.begin(),
                                       after.per_token_bottleneck.end());
  std::ostringstream out;
  out << "token_id,B_before,B_after\n";
  for (const auto& [token, b] : before.per_token_bottleneck) {
    const auto it = after_by_token.find(token);
    if (it == after_by_token.end()) continue;
    out << token << ',' << detail::fmt_double(b) << ','
        << detail::fmt_double(it->second) << '\n';
  }
  return out.str();
}

double ppl_proxy(std::span<const int> token_ids) {
  if (token_ids.empty()) {
    throw Error("repetition score undefined for an empty sequence");
  }
  std::map<int, long long> counts;  // ordered: deterministic summation
  for (int t : token_ids) ++counts[t];
  const double n = static_cast<double>(token_ids.size());
  double entropy = 0.0;
  for (const auto& [token, c] : counts) {
    const double p = c / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

FilterDecision filter_prompt(std::span<const int> token_ids, double threshold) {
  if (!(threshold > 1.0)) {
    throw ConfigError("filter threshold must be > 1");
  }
  FilterDecision decision;
  decision.score = ppl_proxy(token_ids);
  decision.accept = !(decision.score < threshold);  // reject on strictly-less
  return decision;
}

}  // namespace moestress
