#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace moestress {

// In-process OpenAI-compatible endpoint for exercising the probe without a
// real deployment. Requests whose user message looks like a repetition
// attack (unigram perplexity proxy below repetition_threshold) are delayed
// by attack_ratio.
struct MockEndpointOptions {
  int port = 0;                  // 0 picks a free port
  double base_latency_ms = 20.0;
  double attack_ratio = 3.0;     // attack TTFT multiplier
  double noise_frac = 0.05;      // uniform +/- jitter fraction
  std::uint64_t seed = 7;
  double repetition_threshold = 2.0;
};

struct MockRequestRecord {
  std::string arm;  // classification applied: "attack" or "normal"
  double delay_ms = 0.0;
  double ppl_proxy = 0.0;
  int prompt_units = 0;
};

class MockEndpoint {
 public:
  explicit MockEndpoint(MockEndpointOptions opts);
  ~MockEndpoint();
  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  // Binds and serves on a background thread. Throws Error if the port
  // cannot be bound.
  void start();
  void stop();

  int port() const;
  std::string base_url() const;
  std::vector<MockRequestRecord> request_log() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace moestress
