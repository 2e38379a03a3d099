#include "moestress/probe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "moestress/errors.hpp"

namespace moestress {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::vulnerable:
      return "vulnerable";
    case Verdict::not_vulnerable:
      return "not-vulnerable";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

std::string to_string(BackendClass c) {
  switch (c) {
    case BackendClass::moe_like:
      return "moe-likely";
    case BackendClass::dense_like:
      return "dense-likely";
    case BackendClass::indeterminate:
      return "inconclusive";
  }
  return "inconclusive";
}

namespace {

nlohmann::json sample_to_json(const TtftSample& s) {
  return {{"index", s.index},
          {"arm", s.arm},
          {"ttft_ms", s.ttft_ms},
          {"status", s.status},
          {"error", s.error}};
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

TtftSample measure_ttft(const EndpointConfig& endpoint, const std::string& prompt,
                        const std::string& arm, int index) {
  TtftSample s;
  s.index = index;
  s.arm = arm;

  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(endpoint.timeout_sec, 0);
  client.set_read_timeout(endpoint.timeout_sec, 0);
  client.set_write_timeout(endpoint.timeout_sec, 0);

  nlohmann::json body;
  body["model"] = endpoint.model;
  body["messages"] =
      nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  body["max_tokens"] = endpoint.max_tokens;
  body["stream"] = true;

  httplib::Request req;
  req.method = "POST";
  req.path = endpoint.path;
  req.set_header("Content-Type", "application/json");
  if (!endpoint.auth_env.empty()) {
    const char* token = std::getenv(endpoint.auth_env.c_str());
    if (token != nullptr && *token != '\0') {
      req.set_header("Authorization", std::string("Bearer ") + token);
    }
  }
  req.body = body.dump();

  double first_chunk_ms = -1.0;
  const auto t0 = std::chrono::steady_clock::now();
  req.content_receiver = [&](const char*, size_t length, std::uint64_t,
                             std::uint64_t) {
    if (first_chunk_ms < 0.0 && length > 0) first_chunk_ms = elapsed_ms(t0);
    return true;
  };

  const httplib::Result result = client.send(req);
  if (!result) {
    s.status = 0;
    s.error = httplib::to_string(result.error());
    return s;
  }
  s.status = result->status;
  if (result->status != 200) {
    s.error = "HTTP " + std::to_string(result->status);
    return s;
  }
  // Empty body: fall back to headers-complete time.
  s.ttft_ms = first_chunk_ms >= 0.0 ? first_chunk_ms : elapsed_ms(t0);
  return s;
}

RatioEstimate r_api_ci(std::span<const double> attack_ms,
                       std::span<const double> normal_ms,
                       int resamples, double confidence, std::uint64_t seed) {
  if (attack_ms.empty() || normal_ms.empty()) {
    throw Error("ratio estimate needs samples in both arms");
  }
  if (resamples < 1) throw Error("bootstrap needs at least one resample");
  if (!(confidence > 0.0) || !(confidence < 1.0)) {
    throw Error("confidence must be in (0, 1)");
  }
  auto mean = [](std::span<const double> xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / xs.size();
  };
  const double normal_mean = mean(normal_ms);
  if (normal_mean == 0.0) throw Error("zero normal-arm mean");

  RatioEstimate estimate;
  estimate.point = mean(attack_ms) / normal_mean;
  estimate.attack_n = static_cast<int>(attack_ms.size());
  estimate.normal_n = static_cast<int>(normal_ms.size());

  // Percentile bootstrap: resample each arm independently, take the
  // (1 - confidence) quantile of the ratio of means (nearest rank).
  std::mt19937_64 rng(seed);
  std::vector<double> ratios;
  ratios.reserve(resamples);
  for (int r = 0; r < resamples; ++r) {
    double a = 0.0;
    for (std::size_t i = 0; i < attack_ms.size(); ++i) {
      a += attack_ms[rng() % attack_ms.size()];
    }
    a /= attack_ms.size();
    double n = 0.0;
    for (std::size_t i = 0; i < normal_ms.size(); ++i) {
      n += normal_ms[rng() % normal_ms.size()];
    }
    n /= normal_ms.size();
    ratios.push_back(n == 0.0 ? std::numeric_limits<double>::infinity()
                              : a / n);
  }
  std::sort(ratios.begin(), ratios.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil((1.0 - confidence) * static_cast<double>(resamples)));
  rank = std::clamp<std::size_t>(rank, 1, ratios.size());
  estimate.lower = ratios[rank - 1];
  return estimate;
}

BackendClass classify_backend(const RatioEstimate& r, const ProbeOptions& opts) {
  if (!(opts.dense_threshold < opts.moe_threshold)) {
    throw ConfigError("dense_threshold must be below moe_threshold");
  }
  if (r.attack_n == 0 || r.normal_n == 0) return BackendClass::indeterminate;
  if (r.lower >= opts.moe_threshold) return BackendClass::moe_like;
  if (r.point <= opts.dense_threshold) return BackendClass::dense_like;
  return BackendClass::indeterminate;
}

ProbeReport run_probe(const EndpointConfig& endpoint, const ProbeOptions& opts) {
  if (opts.attack_prompt.empty() || opts.normal_prompt.empty()) {
    throw ConfigError("probe needs both an attack and a normal prompt");
  }
  if (endpoint.max_requests <= 0) {
    throw ConfigError("endpoint max_requests must be positive");
  }
  if (opts.samples_per_arm <= 0) {
    throw ConfigError("samples_per_arm must be positive");
  }

  ProbeReport report;
  const int budget = endpoint.max_requests;

  // Shrink warmups, then pairs, until the plan fits the request budget. The
  // budget is a hard cap: every request below goes through this accounting.
  int warmups = std::max(0, opts.warmup_requests);
  while (warmups > 0 && 2 * warmups + 2 > budget) --warmups;
  const int pairs = std::min(opts.samples_per_arm, (budget - 2 * warmups) / 2);
  if (pairs <= 0) {
    report.invalid_reason = "request budget too small for one sample pair";
    return report;
  }

  std::ofstream samples_out;
  if (!opts.samples_path.empty()) {
    samples_out.open(opts.samples_path);
    if (!samples_out) {
      throw Error("cannot write samples: " + opts.samples_path.string());
    }
  }

  int next_index = 0;
  const auto issue = [&](const std::string& prompt, const std::string& arm,
                         bool record) {
    const TtftSample s = measure_ttft(endpoint, prompt, arm, next_index++);
    ++report.requests_attempted;
    if (record) {
      if (!s.ok()) ++report.requests_failed;
      // Raw sample hits disk before any statistics run.
      if (samples_out.is_open()) {
        samples_out << sample_to_json(s).dump() << '\n';
        samples_out.flush();
      }
      report.samples.push_back(s);
    }
  };

  for (int w = 0; w < warmups; ++w) {
    issue(opts.attack_prompt, "warmup-attack", false);
    issue(opts.normal_prompt, "warmup-normal", false);
  }
  // Interleaved arms, attack first, to decorrelate endpoint drift.
  for (int i = 0; i < pairs; ++i) {
    issue(opts.attack_prompt, "attack", true);
    issue(opts.normal_prompt, "normal", true);
  }

  std::vector<double> attack_ok, normal_ok;
  for (const TtftSample& s : report.samples) {
    if (!s.ok()) continue;
    if (s.arm == "attack") attack_ok.push_back(s.ttft_ms);
    if (s.arm == "normal") normal_ok.push_back(s.ttft_ms);
  }
  const int attack_failures = pairs - static_cast<int>(attack_ok.size());
  const int normal_failures = pairs - static_cast<int>(normal_ok.size());
  if (2 * attack_failures > pairs || 2 * normal_failures > pairs) {
    report.invalid_reason = "more than half of one arm's requests failed";
    return report;
  }

  report.r_api = r_api_ci(attack_ok, normal_ok, opts.bootstrap_resamples,
                          opts.confidence, opts.bootstrap_seed);
  report.backend = classify_backend(report.r_api, opts);
  switch (report.backend) {
    case BackendClass::moe_like:
      report.verdict = Verdict::vulnerable;
      break;
    case BackendClass::dense_like:
      report.verdict = Verdict::not_vulnerable;
      break;
    case BackendClass::indeterminate:
      report.verdict = Verdict::inconclusive;
      break;
  }
  report.valid = true;
  return report;
}

std::string ProbeReport::to_json() const {
  nlohmann::json j;
  j["valid"] = valid;
  j["invalid_reason"] = invalid_reason;
  j["verdict"] = moestress::to_string(verdict);
  j["backend"] = moestress::to_string(backend);
  j["requests_attempted"] = requests_attempted;
  j["requests_failed"] = requests_failed;
  j["r_api"] = {{"point", r_api.point},
                {"lower", r_api.lower},
                {"attack_n", r_api.attack_n},
                {"normal_n", r_api.normal_n}};
  nlohmann::json samples_json = nlohmann::json::array();
  for (const TtftSample& s : samples) samples_json.push_back(sample_to_json(s));
  j["samples"] = std::move(samples_json);
  return j.dump(2);
}

std::string EpEstimate::to_string() const {
  if (exceeds_table) return "> " + std::to_string(ep);
  if (below_table) return "<= " + std::to_string(ep);
  return std::to_string(ep);
}

EpEstimate estimate_ep_size(double r_moe,
                            std::span<const std::pair<int, double>> table) {
  if (table.empty()) {
    throw ConfigError("EP estimation needs a non-empty ratio table");
  }
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].first <= table[i - 1].first ||
        table[i].second < table[i - 1].second) {
      throw ConfigError("EP ratio table must be sorted and monotone");
    }
  }
  EpEstimate estimate;
  if (r_moe > table.back().second) {
    estimate.ep = table.back().first;
    estimate.exceeds_table = true;
    return estimate;
  }
  for (const auto& [ep, ratio] : table) {
    if (ratio >= r_moe) {
      estimate.ep = ep;
      estimate.below_table = r_moe < table.front().second;
      return estimate;
    }
  }
  estimate.ep = table.back().first;  // unreachable: r_moe <= back().second
  return estimate;
}

}  // namespace moestress
