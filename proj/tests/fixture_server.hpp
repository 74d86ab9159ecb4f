#pragma once

// Local OpenAI-compatible chat-completions server for tests.
//
// Replies "FIX[<model>]:<fnv1a hex of the user text>" and appends
// "|responses=<blocks>" when a system message is present. A user text
// containing "FAIL" always gets HTTP 500.

#include <cstdio>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dmoa/protocol.hpp"
#include "dmoa/rng.hpp"

namespace fixture {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string expected_reply(const std::string& model, const std::string& user,
                                  bool has_system) {
  std::string out = "FIX[" + model + "]:" + hex64(dmoa::fnv1a64(user));
  if (has_system) out += "|responses=" + std::to_string(dmoa::count_response_blocks(user));
  return out;
}

class Server {
 public:
  Server() {
    server_.Post("/v1/chat/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handle(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Server() {
    server_.stop();
    thread_.join();
  }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  // The next `count` requests get `status` instead of a completion.
  void fail_next(int count, int status = 503) {
    std::lock_guard lock(mu_);
    fail_left_ = count;
    fail_status_ = status;
  }
  void reply_malformed(bool on) {
    std::lock_guard lock(mu_);
    malformed_ = on;
  }
  std::vector<nlohmann::json> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    std::lock_guard lock(mu_);
    requests_.push_back(body);
    auth_.push_back(req.get_header_value("Authorization"));
    if (fail_left_ > 0) {
      --fail_left_;
      res.status = fail_status_;
      res.set_content(R"({"error":"busy"})", "application/json");
      return;
    }
    if (malformed_) {
      res.set_content(R"({"choices":[]})", "application/json");
      return;
    }
    if (body.is_discarded() || !body.contains("messages")) {
      res.status = 400;
      return;
    }
    bool has_system = false;
    std::string user;
    for (const auto& m : body["messages"]) {
      if (m.value("role", "") == "system") has_system = true;
      if (m.value("role", "") == "user") user = m.value("content", "");
    }
    if (user.find("FAIL") != std::string::npos) {
      res.status = 500;
      return;
    }
    const std::string model = body.value("model", "");
    nlohmann::json reply = {
        {"id", "cmpl-fixture"},
        {"object", "chat.completion"},
        {"choices",
         {{{"index", 0},
           {"message", {{"role", "assistant"},
                        {"content", expected_reply(model, user, has_system)}}},
           {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> requests_;
  std::vector<std::string> auth_;
  int fail_left_ = 0;
  int fail_status_ = 503;
  bool malformed_ = false;
};

}  // namespace fixture
