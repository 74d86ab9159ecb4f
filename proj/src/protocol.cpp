#include "dmoa/protocol.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "dmoa/errors.hpp"

namespace dmoa {

std::string to_string(TaskId id) {
  return std::to_string(id.job) + "." + std::to_string(id.seq);
}

std::string to_string(TaskKind kind) {
  switch (kind.stage) {
    case Stage::Direct:
      return "direct";
    case Stage::Proposal:
      return "proposal" + std::to_string(kind.layer);
    case Stage::Aggregation:
      return "aggregation";
  }
  return "unknown";
}

std::string_view to_string(JobPhase phase) {
  switch (phase) {
    case JobPhase::AwaitingLayer:
      return "awaiting_layer";
    case JobPhase::AwaitingAggregation:
      return "awaiting_aggregation";
    case JobPhase::AwaitingDirect:
      return "awaiting_direct";
    case JobPhase::Completed:
      return "completed";
  }
  return "unknown";
}

void ProtocolParams::validate() const {
  if (n < 2) {
    throw ConfigError("n: node count must be >= 2, got " + std::to_string(n));
  }
  if (k > n - 1) {
    throw ConfigError("k: fan-out " + std::to_string(k) +
                      " exceeds n-1 = " + std::to_string(n - 1));
  }
}

std::uint64_t total_inferences(const ProtocolParams& params) {
  return (static_cast<std::uint64_t>(params.k) + 1) * params.layers + 1;
}

std::vector<NodeId> select_neighbors(NodeId self, const ProtocolParams& params,
                                     Rng& rng) {
  if (self >= params.n) {
    throw ConfigError("self: node " + std::to_string(self) +
                      " outside [0, " + std::to_string(params.n) + ")");
  }
  if (params.k > params.n - 1) {
    throw ConfigError("k: fan-out " + std::to_string(params.k) +
                      " exceeds n-1 = " + std::to_string(params.n - 1));
  }

  std::vector<NodeId> candidates(params.n - 1);
  std::iota(candidates.begin(), candidates.end(), NodeId{0});
  for (auto& c : candidates) {
    if (c >= self) ++c;
  }
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::uint32_t i = 0; i < params.k; ++i) {
    const auto j = i + rng.uniform_below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(params.k);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

MessageBundle build_layer_prompt(const Prompt& original,
                                 std::span<const ResponseMsg> responses,
                                 TaskKind stage) {
  if (!stage.uses_system_prompt()) {
    if (!responses.empty()) {
      throw ProtocolViolation("build_layer_prompt: " + to_string(stage) +
                              " takes no prior responses");
    }
    return {std::nullopt, original.text};
  }
  if (responses.empty()) {
    throw ProtocolViolation("build_layer_prompt: " + to_string(stage) +
                            " requires prior responses");
  }

  std::string user = original.text;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    user += "\n\nResponse ";
    user += std::to_string(i + 1);
    user += " (from node ";
    user += std::to_string(responses[i].producer);
    user += "):\n";
    user += responses[i].text;
  }
  return {kAggregatorSystemPrompt, std::move(user)};
}

namespace {

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c >= '0' && c <= '9';
  });
}

// "Response <i> (from node <j>):"
bool is_response_header(std::string_view line) {
  constexpr std::string_view head = "Response ";
  constexpr std::string_view mid = " (from node ";
  constexpr std::string_view tail = "):";
  if (!line.starts_with(head) || !line.ends_with(tail)) return false;
  line.remove_prefix(head.size());
  line.remove_suffix(tail.size());
  const auto at = line.find(mid);
  if (at == std::string_view::npos) return false;
  return is_digits(line.substr(0, at)) &&
         is_digits(line.substr(at + mid.size()));
}

}  // namespace

std::size_t count_response_blocks(std::string_view user_text) {
  std::size_t count = 0;
  while (!user_text.empty()) {
    const auto eol = user_text.find('\n');
    const auto line = user_text.substr(0, eol);
    if (is_response_header(line)) ++count;
    if (eol == std::string_view::npos) break;
    user_text.remove_prefix(eol + 1);
  }
  return count;
}

namespace {

InferenceTask make_task(JobState& job, TaskKind kind, NodeId node,
                        const MessageBundle& payload, double now) {
  InferenceTask task;
  task.id = TaskId{job.job_id, job.next_task_seq++};
  task.kind = kind;
  task.assigned_node = node;
  task.origin = job.origin;
  task.payload = payload;
  task.enqueued_at = now;
  job.pending.push_back(task.id);
  return task;
}

// One proposal to the origin plus one to each freshly sampled neighbor.
std::vector<InferenceTask> open_layer(JobState& job, std::uint32_t layer,
                                      const MessageBundle& payload, double now,
                                      const ProtocolParams& params, Rng& rng) {
  auto neighbors = select_neighbors(job.origin, params, rng);
  std::vector<InferenceTask> out;
  out.reserve(neighbors.size() + 1);
  const auto kind = TaskKind::proposal(layer);
  out.push_back(make_task(job, kind, job.origin, payload, now));
  for (NodeId nb : neighbors) {
    out.push_back(make_task(job, kind, nb, payload, now));
  }
  job.phase = JobPhase::AwaitingLayer;
  job.layer = layer;
  job.layer_neighbor_sets.push_back(std::move(neighbors));
  return out;
}

}  // namespace

JobStart spawn_job(const Prompt& prompt, const ProtocolParams& params,
                   Rng& rng) {
  params.validate();
  if (prompt.origin >= params.n) {
    throw ConfigError("origin: node " + std::to_string(prompt.origin) +
                      " outside [0, " + std::to_string(params.n) + ")");
  }

  JobStart start;
  JobState& job = start.job;
  job.job_id = prompt.id;
  job.origin = prompt.origin;
  job.original_prompt = prompt;

  if (params.layers == 0) {
    job.phase = JobPhase::AwaitingDirect;
    start.dispatches.push_back(make_task(
        job, TaskKind::direct(), job.origin,
        build_layer_prompt(prompt, {}, TaskKind::direct()), prompt.created_at));
    return start;
  }
  start.dispatches =
      open_layer(job, 1, build_layer_prompt(prompt, {}, TaskKind::proposal(1)),
                 prompt.created_at, params, rng);
  return start;
}

std::vector<InferenceTask> advance_job(JobState& job, ResponseMsg incoming,
                                       double now, const ProtocolParams& params,
                                       Rng& rng) {
  if (job.phase == JobPhase::Completed) {
    throw ProtocolViolation("advance_job: job " + std::to_string(job.job_id) +
                            " already completed");
  }
  if (incoming.job_id() != job.job_id) {
    throw ProtocolViolation("advance_job: response for job " +
                            std::to_string(incoming.job_id()) +
                            " delivered to job " + std::to_string(job.job_id));
  }
  const auto it =
      std::find(job.pending.begin(), job.pending.end(), incoming.task_id);
  if (it == job.pending.end()) {
    throw ProtocolViolation("advance_job: task " + to_string(incoming.task_id) +
                            " is not pending");
  }

  // Past this point nothing throws except allocation.
  job.pending.erase(it);
  ++job.inference_count;

  if (job.phase == JobPhase::AwaitingDirect ||
      job.phase == JobPhase::AwaitingAggregation) {
    job.phase = JobPhase::Completed;
    job.completed_at = now;
    job.final_response = std::move(incoming);
    return {};
  }

  job.collected.push_back(std::move(incoming));
  if (!job.pending.empty()) return {};

  const std::uint32_t finished_layer = job.layer;
  std::vector<InferenceTask> out;
  if (finished_layer < params.layers) {
    const auto next = TaskKind::proposal(finished_layer + 1);
    auto payload = build_layer_prompt(job.original_prompt, job.collected, next);
    out = open_layer(job, finished_layer + 1, payload, now, params, rng);
  } else {
    const auto agg = TaskKind::aggregation();
    auto payload = build_layer_prompt(job.original_prompt, job.collected, agg);
    out.push_back(make_task(job, agg, job.origin, payload, now));
    job.phase = JobPhase::AwaitingAggregation;
  }
  job.collected.clear();
  return out;
}

}  // namespace dmoa
