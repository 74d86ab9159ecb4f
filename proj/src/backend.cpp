#include "dmoa/backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "dmoa/errors.hpp"

namespace dmoa {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string_view role_name(Role r) { return r == Role::System ? "system" : "user"; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string mock_text(NodeId node, std::string_view user, bool has_system) {
  std::string out = "MOCK[" + std::to_string(node) + "]:" + hex64(fnv1a64(user));
  if (has_system) out += "|responses=" + std::to_string(count_response_blocks(user));
  return out;
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

void InferenceRequest::validate() const {
  if (messages.empty()) throw ConfigError("messages: empty");
  bool has_user = false;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].content.empty()) {
      throw ConfigError("messages[" + std::to_string(i) + "].content: empty");
    }
    if (messages[i].role == Role::System && i != 0) {
      throw ConfigError("messages[" + std::to_string(i) +
                        "]: system message must come first");
    }
    has_user = has_user || messages[i].role == Role::User;
  }
  if (!has_user) throw ConfigError("messages: no user message");
}

InferenceRequest make_request(const MessageBundle& bundle, std::string model,
                              double temperature, std::optional<int> max_tokens) {
  InferenceRequest req;
  if (bundle.system_text) {
    req.messages.push_back({Role::System, std::string(*bundle.system_text)});
  }
  req.messages.push_back({Role::User, bundle.user_text});
  req.temperature = temperature;
  req.max_tokens = max_tokens;
  req.model = std::move(model);
  return req;
}

nlohmann::json to_request_body(const InferenceRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  nlohmann::json body = {{"model", request.model},
                         {"messages", std::move(messages)},
                         {"temperature", request.temperature}};
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  return body;
}

InferenceRequest parse_request_body(const nlohmann::json& body) {
  try {
    InferenceRequest req;
    req.model = body.at("model").get<std::string>();
    req.temperature = body.at("temperature").get<double>();
    if (body.contains("max_tokens")) req.max_tokens = body["max_tokens"].get<int>();
    for (const auto& m : body.at("messages")) {
      const auto role = m.at("role").get<std::string>();
      if (role != "system" && role != "user") {
        throw DecodeError("request body: unsupported role '" + role + "'");
      }
      req.messages.push_back({role == "system" ? Role::System : Role::User,
                              m.at("content").get<std::string>()});
    }
    return req;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("request body: ") + e.what());
  }
}

std::string parse_completion_content(std::string_view body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw DecodeError("completion: body is not JSON");
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw DecodeError("completion: missing choices[0]");
  }
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") ||
      !first["message"].is_object() || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw DecodeError("completion: missing choices[0].message.content");
  }
  return first["message"]["content"].get<std::string>();
}

void BackendSpec::validate(std::string_view field) const {
  const std::string f(field);
  if (!(temperature >= 0.0)) throw ConfigError(f + ".temperature: must be >= 0");
  if (max_tokens && *max_tokens <= 0) {
    throw ConfigError(f + ".max_tokens: must be positive");
  }
  if (kind == BackendKind::Mock) {
    if (mock.delay.mean != 0.0) mock.delay.validate(f + ".delay");
    return;
  }
  if (!(http.timeout > 0.0)) throw ConfigError(f + ".timeout: must be > 0");
  if (http.max_retries < 0) throw ConfigError(f + ".max_retries: must be >= 0");
  if (!(http.backoff_base >= 0.0)) {
    throw ConfigError(f + ".backoff_base: must be >= 0");
  }
  if (http.model.empty()) throw ConfigError(f + ".model: required for http");
}

std::string mock_response_text(NodeId node, const MessageBundle& bundle) {
  return mock_text(node, bundle.user_text, bundle.system_text.has_value());
}

std::string mock_response_text(NodeId node, const InferenceRequest& request) {
  bool has_system = false;
  std::string_view user;
  for (const auto& m : request.messages) {
    if (m.role == Role::System) has_system = true;
    else user = m.content;
  }
  return mock_text(node, user, has_system);
}

double RetryPolicy::nominal_delay(int retry) const {
  return base * std::pow(factor, retry - 1);
}

double RetryPolicy::delay(int retry, Rng& rng) const {
  const double u = 2.0 * rng.uniform01() - 1.0;
  return nominal_delay(retry) * (1.0 + jitter * u);
}

MockBackend::MockBackend(MockBackendSpec spec, NodeId node, std::uint64_t seed)
    : spec_(spec), node_(node), rng_(Rng::substream(seed, "mock", node)) {}

InferenceResult MockBackend::infer(const InferenceRequest& request) {
  request.validate();
  double delay = 0.0;
  if (spec_.delay.mean > 0.0) {
    std::lock_guard lock(mu_);
    delay = sample_service(spec_.delay, rng_);
  }
  if (spec_.sleep && delay > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
  InferenceResult out;
  if (spec_.transform == MockTransform::Echo) {
    out.text = request.messages.back().content;
  } else {
    out.text = mock_response_text(node_, request);
  }
  out.measured_latency = delay;
  out.backend_id = id();
  return out;
}

HealthReport MockBackend::validate() {
  HealthReport h;
  h.healthy = h.reachable = h.model_available = true;
  return h;
}

std::string MockBackend::id() const { return "mock:" + std::to_string(node_); }

std::pair<std::string, std::string> split_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ConfigError("base_url: missing scheme in '" + std::string(url) + "'");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("base_url: unsupported scheme '" + std::string(scheme) + "'");
  }
  const auto host_begin = scheme_end + 3;
  const auto path_begin = url.find('/', host_begin);
  std::string origin(url.substr(0, path_begin));
  if (origin.size() == host_begin) {
    throw ConfigError("base_url: missing host in '" + std::string(url) + "'");
  }
  std::string path =
      path_begin == std::string_view::npos ? "" : std::string(url.substr(path_begin));
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {origin, path};
}

HttpBackend::HttpBackend(HttpBackendSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)),
      api_key_(env_or_empty("MOA_API_KEY")),
      sleeper_([](double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
      }),
      jitter_rng_(Rng::substream(seed, "backoff", 0)) {
  if (spec_.base_url.empty()) spec_.base_url = env_or_empty("MOA_API_BASE");
  if (spec_.base_url.empty()) {
    throw ConfigError("base_url: not configured and MOA_API_BASE unset");
  }
  std::tie(origin_, path_) = split_base_url(spec_.base_url);
  retry_.max_retries = spec_.max_retries;
  retry_.base = spec_.backoff_base;
}

std::string HttpBackend::id() const { return spec_.base_url + "#" + spec_.model; }

std::string HttpBackend::post_once(const std::string& body) {
  httplib::Client client(origin_);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(spec_.timeout));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_ + "/chat/completions", headers, body,
                         "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "POST " + spec_.base_url +
                             "/chat/completions: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw TimeoutError(what);
    }
    throw ConnectionError(what);
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpStatusError(res->status, "POST " + spec_.base_url +
                                           "/chat/completions: HTTP " +
                                           std::to_string(res->status));
  }
  return res->body;
}

InferenceResult HttpBackend::infer(const InferenceRequest& request) {
  request.validate();
  InferenceRequest req = request;
  if (req.model.empty()) req.model = spec_.model;
  const std::string body = to_request_body(req).dump();

  const auto t0 = Clock::now();
  int attempt = 0;
  for (;;) {
    ++attempt;
    {
      std::lock_guard lock(mu_);
      last_attempts_ = attempt;
    }
    try {
      const std::string response = post_once(body);
      InferenceResult out;
      out.text = parse_completion_content(response);
      out.measured_latency = seconds_since(t0);
      out.backend_id = id();
      return out;
    } catch (const HttpStatusError& e) {
      if (!retryable_status(e.status()) || attempt > retry_.max_retries) throw;
    } catch (const TimeoutError&) {
      if (attempt > retry_.max_retries) throw;
    } catch (const ConnectionError&) {
      if (attempt > retry_.max_retries) throw;
    }
    double pause;
    {
      std::lock_guard lock(mu_);
      pause = retry_.delay(attempt, jitter_rng_);
    }
    sleeper_(pause);
  }
}

HealthReport HttpBackend::validate() {
  HealthReport h;
  InferenceRequest probe;
  probe.model = spec_.model;
  probe.messages.push_back({Role::User, "ping"});
  probe.temperature = 0.0;
  probe.max_tokens = 1;

  const auto t0 = Clock::now();
  try {
    const auto body = post_once(to_request_body(probe).dump());
    h.round_trip = seconds_since(t0);
    h.reachable = true;
    parse_completion_content(body);
    h.model_available = true;
    h.healthy = true;
  } catch (const HttpStatusError& e) {
    h.round_trip = seconds_since(t0);
    h.reachable = true;
    h.cause = e.what();
  } catch (const DecodeError& e) {
    h.cause = e.what();
  } catch (const BackendError& e) {
    h.round_trip = seconds_since(t0);
    h.cause = std::string("connection error: ") + e.what();
  }
  return h;
}

std::unique_ptr<InferenceBackend> make_backend(const BackendSpec& spec,
                                               NodeId node, std::uint64_t seed) {
  if (spec.kind == BackendKind::Mock) {
    return std::make_unique<MockBackend>(spec.mock, node, seed);
  }
  return std::make_unique<HttpBackend>(spec.http, mix_seed(seed, node));
}

}  // namespace dmoa
