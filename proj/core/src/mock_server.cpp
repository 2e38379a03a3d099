#include "moestress/mock_server.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "moestress/defense.hpp"
#include "moestress/errors.hpp"
#include "moestress/prompts.hpp"
#include "rng.hpp"

namespace moestress {

namespace {

// Stable word -> token-id mapping so the unigram repetition score sees
// repeated words as repeated ids.
int unit_token_id(const std::string& unit) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : unit) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return static_cast<int>(hash & 0x7fffffffULL);
}

std::string extract_user_content(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("request body is not valid JSON");
  }
  if (!j.contains("messages") || !j.at("messages").is_array()) {
    throw ParseError("request has no messages array");
  }
  // Last user message is the prompt under test.
  std::string content;
  for (const auto& msg : j.at("messages")) {
    if (msg.value("role", "") == "user") content = msg.value("content", "");
  }
  return content;
}

}  // namespace

struct MockEndpoint::Impl {
  MockEndpointOptions opts;
  httplib::Server server;
  std::thread worker;
  int port = -1;
  std::atomic<std::uint64_t> request_counter{0};
  mutable std::mutex log_mutex;
  std::vector<MockRequestRecord> log;

  void handle(const httplib::Request& req, httplib::Response& res) {
    std::string content;
    try {
      content = extract_user_content(req.body);
    } catch (const ParseError& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(),
                      "application/json");
      return;
    }

    const std::vector<std::string> units = split_units(content);
    std::vector<int> ids;
    ids.reserve(units.size());
    for (const auto& u : units) ids.push_back(unit_token_id(u));

    MockRequestRecord record;
    record.prompt_units = static_cast<int>(units.size());
    record.ppl_proxy = ids.empty() ? 0.0 : ppl_proxy(ids);
    const bool attack =
        !ids.empty() && record.ppl_proxy < opts.repetition_threshold;
    record.arm = attack ? "attack" : "normal";

    const std::uint64_t n = request_counter.fetch_add(1);
    const double noise =
        opts.noise_frac * detail::range_double(detail::mix_keys(opts.seed, n),
                                               -1.0, 1.0);
    record.delay_ms =
        opts.base_latency_ms * (attack ? opts.attack_ratio : 1.0) * (1.0 + noise);

    std::this_thread::sleep_for(
        std::chrono::duration<double, std::milli>(record.delay_ms));

    {
      std::lock_guard<std::mutex> lock(log_mutex);
      log.push_back(record);
    }

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      body = nlohmann::json::object();
    }
    nlohmann::json reply;
    reply["id"] = "mock-" + std::to_string(n);
    reply["object"] = "chat.completion";
    reply["model"] = body.value("model", "mock");
    reply["choices"] = nlohmann::json::array(
        {{{"index", 0},
          {"message", {{"role", "assistant"}, {"content", "ok"}}},
          {"finish_reason", "stop"}}});
    reply["usage"] = {{"prompt_tokens", record.prompt_units},
                      {"completion_tokens", 1}};
    res.set_content(reply.dump(), "application/json");
  }
};

MockEndpoint::MockEndpoint(MockEndpointOptions opts)
    : impl_(std::make_unique<Impl>()) {
  if (opts.base_latency_ms <= 0.0) {
    throw ConfigError("mock base_latency_ms must be positive");
  }
  if (opts.attack_ratio <= 0.0) {
    throw ConfigError("mock attack_ratio must be positive");
  }
  if (opts.noise_frac < 0.0 || opts.noise_frac >= 1.0) {
    throw ConfigError("mock noise_frac must be in [0, 1)");
  }
  impl_->opts = opts;
  impl_->server.Post("/v1/chat/completions",
                     [impl = impl_.get()](const httplib::Request& req,
                                          httplib::Response& res) {
                       impl->handle(req, res);
                     });
}

MockEndpoint::~MockEndpoint() {
  try {
    stop();
  } catch (...) {
    // destructor must not throw
  }
}

void MockEndpoint::start() {
  if (impl_->worker.joinable()) throw Error("mock endpoint already started");
  if (impl_->opts.port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    if (impl_->port < 0) throw Error("mock endpoint failed to bind a port");
  } else {
    if (!impl_->server.bind_to_port("127.0.0.1", impl_->opts.port)) {
      throw Error("mock endpoint failed to bind port " +
                  std::to_string(impl_->opts.port));
    }
    impl_->port = impl_->opts.port;
  }
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockEndpoint::stop() {
  if (!impl_->worker.joinable()) return;
  impl_->server.stop();
  impl_->worker.join();
}

int MockEndpoint::port() const {
  if (impl_->port < 0) throw Error("mock endpoint not started");
  return impl_->port;
}

std::string MockEndpoint::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port());
}

std::vector<MockRequestRecord> MockEndpoint::request_log() const {
  std::lock_guard<std::mutex> lock(impl_->log_mutex);
  return impl_->log;
}

}  // namespace moestress
