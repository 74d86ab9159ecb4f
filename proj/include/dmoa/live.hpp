#pragma once

// Live execution of the protocol against real (or fixture) backends. Each node
// runs one worker that serves its FCFS queue one task at a time; the workers
// share the job table and advance jobs as responses come back.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmoa/backend.hpp"
#include "dmoa/protocol.hpp"

namespace dmoa {

struct LiveNode {
  std::shared_ptr<InferenceBackend> backend;
  std::string model;
  double temperature = kDefaultTemperature;
  std::optional<int> max_tokens;
};

struct LivePrompt {
  NodeId origin = 0;
  std::string text;
};

struct StageTiming {
  TaskId task;
  TaskKind kind;
  NodeId node = 0;
  double enqueued_at = 0.0;  // seconds since run start
  double started_at = 0.0;
  double finished_at = 0.0;
  double backend_latency = 0.0;
};

struct LiveRecord {
  JobId job = 0;
  NodeId origin = 0;
  std::string prompt;
  bool ok = false;
  std::string response;
  std::string error;
  double created_at = 0.0;
  double completed_at = 0.0;
  double latency = 0.0;
  std::vector<StageTiming> stages;  // completion order
};

/// Runs every prompt to completion or failure. A backend error fails only the
/// job it belongs to. Records come back in prompt order.
std::vector<LiveRecord> run_live(const ProtocolParams& params,
                                 std::vector<LiveNode> nodes,
                                 const std::vector<LivePrompt>& prompts,
                                 std::uint64_t seed);

/// Newline-delimited JSON objects {"origin": <node>, "prompt": "<text>"}.
/// Blank lines are skipped. Throws ConfigError with the line number.
std::vector<LivePrompt> parse_prompts(std::istream& in, std::uint32_t n);

nlohmann::json to_json(const LiveRecord& record);

}  // namespace dmoa
