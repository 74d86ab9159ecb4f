#pragma once

// Distributed mixture-of-agents protocol: neighbor selection, layer prompt
// construction and the per-job fork-join state machine.
//
// Every function here is deterministic given its inputs and the injected Rng.
// Nothing here knows about time sources, queues or transports; the simulator
// and the live runner both drive jobs through spawn_job / advance_job.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmoa/rng.hpp"

namespace dmoa {

using NodeId = std::uint32_t;
using JobId = std::uint64_t;

/// Task identity: owning job plus a job-local sequence number.
struct TaskId {
  JobId job = 0;
  std::uint32_t seq = 0;

  friend auto operator<=>(const TaskId&, const TaskId&) = default;
};

std::string to_string(TaskId id);

struct ProtocolParams {
  std::uint32_t n = 2;       // node count
  std::uint32_t k = 0;       // neighbors per layer
  std::uint32_t layers = 0;  // M

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Number of inferences one job consumes over its lifetime: (k+1)M + 1.
std::uint64_t total_inferences(const ProtocolParams& params);

/// Uniformly random k-subset of the other n-1 nodes, sorted ascending.
std::vector<NodeId> select_neighbors(NodeId self, const ProtocolParams& params,
                                     Rng& rng);

struct Prompt {
  JobId id = 0;
  NodeId origin = 0;
  std::string text;
  double created_at = 0.0;
};

enum class Stage : std::uint8_t { Direct, Proposal, Aggregation };

struct TaskKind {
  Stage stage = Stage::Direct;
  std::uint32_t layer = 0;  // 1-based, only meaningful for proposals

  static constexpr TaskKind direct() { return {Stage::Direct, 0}; }
  static constexpr TaskKind proposal(std::uint32_t layer) {
    return {Stage::Proposal, layer};
  }
  static constexpr TaskKind aggregation() { return {Stage::Aggregation, 0}; }

  /// Aggregation and deep-layer proposals carry the aggregator instruction.
  bool uses_system_prompt() const {
    return stage == Stage::Aggregation ||
           (stage == Stage::Proposal && layer >= 2);
  }

  friend bool operator==(const TaskKind&, const TaskKind&) = default;
};

std::string to_string(TaskKind kind);

/// Verbatim aggregation instruction given to aggregators and deep-layer
/// proposers.
inline constexpr std::string_view kAggregatorSystemPrompt =
    "You have been provided with a set of responses from various open-source "
    "models to the latest user query. Your task is to synthesize these "
    "responses into a single, high-quality response. It is crucial to "
    "critically evaluate the information provided in these responses, "
    "recognizing that some of it may be biased or incorrect. Your response "
    "should not simply replicate the given answers but should offer a refined, "
    "accurate, and comprehensive reply to the instruction. Ensure your "
    "response is well-structured, coherent, and adheres to the highest "
    "standards of accuracy and reliability. Do not add any additional comments "
    "about how you created these responses. Just synthesize these responses as "
    "instructed.";

struct MessageBundle {
  // Always kAggregatorSystemPrompt when present.
  std::optional<std::string_view> system_text;
  std::string user_text;
};

struct InferenceTask {
  TaskId id;
  TaskKind kind;
  NodeId assigned_node = 0;
  NodeId origin = 0;
  MessageBundle payload;
  double enqueued_at = 0.0;

  JobId job_id() const { return id.job; }
};

struct ResponseMsg {
  TaskId task_id;
  NodeId producer = 0;
  std::string text;
  double produced_at = 0.0;

  JobId job_id() const { return task_id.job; }
};

/// First-layer and direct prompts pass the original text through. Deeper
/// layers and aggregation get the system prompt plus the original text
/// followed by numbered response blocks in the given order:
///
///   <original>\n\nResponse 1 (from node 2):\n<text>\n\nResponse 2 ...
///
/// Throws ProtocolViolation when the response list does not fit the stage.
MessageBundle build_layer_prompt(const Prompt& original,
                                 std::span<const ResponseMsg> responses,
                                 TaskKind stage);

/// Number of "Response i (from node j):" headers in a concatenated prompt.
std::size_t count_response_blocks(std::string_view user_text);

enum class JobPhase : std::uint8_t {
  AwaitingLayer,
  AwaitingAggregation,
  AwaitingDirect,
  Completed
};

std::string_view to_string(JobPhase phase);

struct JobState {
  JobId job_id = 0;
  NodeId origin = 0;
  Prompt original_prompt;
  JobPhase phase = JobPhase::AwaitingDirect;
  std::uint32_t layer = 0;  // current layer while AwaitingLayer
  std::vector<TaskId> pending;
  std::vector<ResponseMsg> collected;  // arrival order, current layer only
  std::vector<std::vector<NodeId>> layer_neighbor_sets;
  std::uint64_t inference_count = 0;
  std::optional<double> completed_at;
  std::optional<ResponseMsg> final_response;
  std::uint32_t next_task_seq = 0;
};

struct JobStart {
  JobState job;
  std::vector<InferenceTask> dispatches;
};

/// Creates the job for a freshly generated prompt. With M >= 1 the origin and
/// k sampled neighbors each receive a layer-1 proposal (origin first); with
/// M = 0 the origin receives one direct task.
JobStart spawn_job(const Prompt& prompt, const ProtocolParams& params,
                   Rng& rng);

/// Feeds one response into the job and returns the tasks it triggers.
///
/// Provides the strong guarantee: on ProtocolViolation (unknown or duplicate
/// task, completed job) the job is left untouched. `now` stamps new tasks and
/// the completion time.
std::vector<InferenceTask> advance_job(JobState& job, ResponseMsg incoming,
                                       double now, const ProtocolParams& params,
                                       Rng& rng);

}  // namespace dmoa
