#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace moestress {

// Target chat-completions endpoint. auth_env names an environment variable
// holding the bearer token; the token itself is never stored in reports.
struct EndpointConfig {
  std::string base_url;             // e.g. http://127.0.0.1:8080
  std::string path = "/v1/chat/completions";
  std::string model;                // model field in the request body
  std::string auth_env;             // env var with the API key, may be empty
  int timeout_sec = 120;
  int max_requests = 64;            // hard budget across both arms
  int max_tokens = 1;               // completion cap; TTFT needs one token
};

struct TtftSample {
  int index = 0;          // request order, both arms share the counter
  std::string arm;        // "attack" or "normal"
  double ttft_ms = -1.0;  // <0 on failure
  int status = 0;         // HTTP status, 0 on transport error
  std::string error;      // empty on success
  bool ok() const { return status == 200 && ttft_ms >= 0.0; }
};

// Ratio of arm means with a one-sided bootstrap lower confidence bound.
struct RatioEstimate {
  double point = 0.0;
  double lower = 0.0;  // lower bound at the configured confidence
  int attack_n = 0;
  int normal_n = 0;
};

enum class Verdict { vulnerable, not_vulnerable, inconclusive };

std::string to_string(Verdict v);

// Backend classification by the lower confidence bound of r_api.
enum class BackendClass { dense_like, moe_like, indeterminate };

std::string to_string(BackendClass c);

struct ProbeOptions {
  int samples_per_arm = 8;
  int bootstrap_resamples = 10000;
  double confidence = 0.95;
  double moe_threshold = 1.4;    // lower bound above this: MoE-like
  double dense_threshold = 1.2;  // point below this: dense-like
  std::uint64_t bootstrap_seed = 42;
  std::string attack_prompt;
  std::string normal_prompt;
  // When set, every raw sample is appended (and flushed) here as JSONL
  // before any statistics run.
  std::filesystem::path samples_path;
  int warmup_requests = 1;  // unrecorded warmups per arm, inside the budget
};

struct ProbeReport {
  std::vector<TtftSample> samples;
  RatioEstimate r_api;
  Verdict verdict = Verdict::inconclusive;
  BackendClass backend = BackendClass::indeterminate;
  int requests_attempted = 0;
  int requests_failed = 0;
  bool valid = false;  // false when either arm lost more than half its samples
  std::string invalid_reason;

  std::string to_json() const;
};

// One chat request; wall-clock time to the first streamed byte of the
// completion. Returns a failed sample rather than throwing on HTTP errors.
TtftSample measure_ttft(const EndpointConfig& endpoint, const std::string& prompt,
                        const std::string& arm, int index);

// Interleaves attack/normal requests (attack first), honours the request
// budget, then computes r_api and the verdict.
ProbeReport run_probe(const EndpointConfig& endpoint, const ProbeOptions& opts);

// Percentile-bootstrap ratio of means. Throws Error when either arm is empty.
RatioEstimate r_api_ci(std::span<const double> attack_ms,
                       std::span<const double> normal_ms,
                       int resamples, double confidence, std::uint64_t seed);

BackendClass classify_backend(const RatioEstimate& r, const ProbeOptions& opts);

// Expert-parallel degree consistent with a measured MoE-time ratio, from a
// reference table of (ep_size, expected r_moe) pairs sorted by ep_size.
struct EpEstimate {
  int ep = 0;
  bool exceeds_table = false;  // ratio above the largest table entry
  bool below_table = false;    // ratio below the smallest table entry
  std::string to_string() const;  // "8", "> 8", or "<= 2"
};

EpEstimate estimate_ep_size(double r_moe,
                            std::span<const std::pair<int, double>> table);

}  // namespace moestress
