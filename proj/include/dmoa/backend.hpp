#pragma once

// Inference backends: a seeded mock for simulation-grade determinism and an
// OpenAI-compatible chat-completions client for live runs.

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmoa/distributions.hpp"
#include "dmoa/protocol.hpp"
#include "dmoa/rng.hpp"

namespace dmoa {

inline constexpr double kDefaultTemperature = 0.7;

enum class Role { System, User };

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct InferenceRequest {
  std::vector<ChatMessage> messages;  // at most one system message, first
  double temperature = kDefaultTemperature;
  std::optional<int> max_tokens;
  std::string model;

  /// Throws ConfigError if the message layout is invalid.
  void validate() const;
};

InferenceRequest make_request(const MessageBundle& bundle, std::string model,
                              double temperature,
                              std::optional<int> max_tokens = std::nullopt);

/// Chat-completions request body: model, messages, temperature, and
/// max_tokens only when set.
nlohmann::json to_request_body(const InferenceRequest& request);
/// Inverse of to_request_body. Throws DecodeError.
InferenceRequest parse_request_body(const nlohmann::json& body);
/// choices[0].message.content. Throws DecodeError.
std::string parse_completion_content(std::string_view body);

struct InferenceResult {
  std::string text;
  double measured_latency = 0.0;  // seconds
  std::string backend_id;
};

struct HealthReport {
  bool healthy = false;
  bool reachable = false;
  bool model_available = false;
  double round_trip = 0.0;  // seconds
  std::string cause;
};

enum class BackendKind { Mock, Http };
enum class MockTransform { Digest, Echo };

struct MockBackendSpec {
  ServiceSpec delay{ServiceDist::Deterministic, 0.0, 1.0};
  MockTransform transform = MockTransform::Digest;
  bool sleep = false;  // actually wait out the sampled delay
};

struct HttpBackendSpec {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model;
  double timeout = 60.0;  // seconds, per attempt
  int max_retries = 3;
  double backoff_base = 0.5;  // seconds
};

struct BackendSpec {
  BackendKind kind = BackendKind::Mock;
  MockBackendSpec mock;
  HttpBackendSpec http;
  double temperature = kDefaultTemperature;
  std::optional<int> max_tokens;

  void validate(std::string_view field) const;
};

/// "MOCK[<node>]:<16 hex digits of FNV-1a(user text)>", with
/// "|responses=<count>" appended when the bundle carries the system prompt.
std::string mock_response_text(NodeId node, const MessageBundle& bundle);
std::string mock_response_text(NodeId node, const InferenceRequest& request);

/// Exponential backoff with symmetric multiplicative jitter.
struct RetryPolicy {
  int max_retries = 3;
  double base = 0.5;
  double factor = 2.0;
  double jitter = 0.2;

  /// Nominal delay before retry number `retry` (1-based): base * factor^(retry-1).
  double nominal_delay(int retry) const;
  /// Nominal delay scaled by a uniform factor in [1 - jitter, 1 + jitter].
  double delay(int retry, Rng& rng) const;
};

class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual InferenceResult infer(const InferenceRequest& request) = 0;
  virtual HealthReport validate() = 0;
  virtual std::string id() const = 0;
};

class MockBackend final : public InferenceBackend {
 public:
  MockBackend(MockBackendSpec spec, NodeId node, std::uint64_t seed);

  InferenceResult infer(const InferenceRequest& request) override;
  HealthReport validate() override;
  std::string id() const override;

 private:
  MockBackendSpec spec_;
  NodeId node_;
  std::mutex mu_;
  Rng rng_;
};

using Sleeper = std::function<void(double seconds)>;

class HttpBackend final : public InferenceBackend {
 public:
  /// The bearer token defaults to $MOA_API_KEY; an empty base_url falls back
  /// to $MOA_API_BASE.
  HttpBackend(HttpBackendSpec spec, std::uint64_t seed);

  InferenceResult infer(const InferenceRequest& request) override;
  HealthReport validate() override;
  std::string id() const override;

  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
  void set_api_key(std::string key) { api_key_ = std::move(key); }
  /// Attempts made by the most recent infer() call.
  int last_attempts() const { return last_attempts_; }

 private:
  std::string post_once(const std::string& body);

  HttpBackendSpec spec_;
  RetryPolicy retry_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // base path, no trailing slash
  std::string api_key_;
  Sleeper sleeper_;
  std::mutex mu_;
  Rng jitter_rng_;
  int last_attempts_ = 0;
};

std::unique_ptr<InferenceBackend> make_backend(const BackendSpec& spec,
                                               NodeId node, std::uint64_t seed);

/// Splits "http://host:port/v1" into ("http://host:port", "/v1").
/// Throws ConfigError for a malformed URL.
std::pair<std::string, std::string> split_base_url(std::string_view url);

}  // namespace dmoa
