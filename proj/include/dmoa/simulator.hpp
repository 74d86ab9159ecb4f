#pragma once

// Discrete-event simulation of the distributed MoA network.
//
// n nodes, each with one FCFS queue and one server (the device's LLM). Users
// generate prompts as a renewal process with per-user rate lambda; each prompt
// becomes a protocol job whose tasks travel between nodes with an optional
// network delay. Events are processed in strict (time, seq) order; seq is the
// creation counter, so simultaneous events keep their scheduling order.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmoa/distributions.hpp"
#include "dmoa/protocol.hpp"

namespace dmoa {

inline constexpr std::size_t kDefaultQueueGuard = 1'000'000;

struct InjectedPrompt {
  double time = 0.0;
  NodeId origin = 0;
  std::string text;
};

/// Full description of one simulated experiment. lambda is the per-user rate.
struct MoAConfig {
  ProtocolParams params;
  double lambda = 0.25;
  ArrivalDist arrival = ArrivalDist::Poisson;
  std::vector<ServiceSpec> service;  // one per node
  DelaySpec network_delay;
  double horizon = 10'000.0;
  double warmup = 1'000.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> queue_guard = kDefaultQueueGuard;

  // Renewal arrivals at every node. Off for hand-injected scenarios.
  bool generate_arrivals = true;
  std::vector<InjectedPrompt> injected;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  double alpha_max() const;
};

/// Homogeneous config with `alpha` as the mean service time on every node.
MoAConfig make_config(ProtocolParams params, double lambda, ServiceSpec service,
                      double horizon, std::uint64_t seed);

enum class Verdict { StableLooking, Growing, AbortedByGuard };

std::string_view to_string(Verdict v);

struct NodeReport {
  double time_avg_queue_waiting = 0.0;
  double time_avg_in_system = 0.0;
  double utilization_measured = 0.0;
  double input_rate = 0.0;  // tasks delivered per second within the window
  std::uint64_t tasks_served = 0;
};

struct SimReport {
  std::vector<NodeReport> per_node;
  double avg_queue_size = 0.0;
  double mean_latency = 0.0;
  double latency_p50 = 0.0;
  double latency_p95 = 0.0;
  std::uint64_t completed_jobs = 0;  // created in window and finished by its end
  std::uint64_t generated_jobs = 0;  // created in window

  // Least-squares slope (tasks/s) of the outstanding inference backlog: every
  // inference a live job still owes, whether queued, in service, in transit or
  // not yet issued. Input adds (k+1)M+1 per arrival, each service removes one.
  double growth_slope = 0.0;
  // Slope of the total count of tasks waiting in node queues.
  double queued_growth_slope = 0.0;
  double backlog_at_warmup = 0.0;
  double backlog_final = 0.0;

  // Jobs whose served-task count or protocol inference count differed from
  // (k+1)M+1 at completion. Counted over the whole run.
  std::uint64_t conservation_violations = 0;
  std::uint64_t total_completed_jobs = 0;

  double end_time = 0.0;  // horizon, or the abort time
  Verdict verdict = Verdict::StableLooking;
};

/// One processed event, as written to the trace.
struct TraceRecord {
  double time = 0.0;
  std::uint64_t seq = 0;
  std::string_view kind;  // arrival | delivery | service_complete | response_delivery
  NodeId node = 0;
  JobId job = 0;
  std::optional<std::uint32_t> task;  // job-local task seq
};

/// Hooks for white-box tests. All default to no-ops.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_event(const TraceRecord&) {}
  virtual void on_enqueue(double /*time*/, NodeId, TaskId) {}
  virtual void on_service_start(double /*time*/, NodeId, TaskId,
                                std::size_t /*waiting_after*/) {}
  virtual void on_job_complete(const JobState&, std::uint64_t /*services*/) {}
};

struct RunOptions {
  std::ostream* trace = nullptr;  // newline-delimited JSON, one line per event
  SimObserver* observer = nullptr;
};

/// Runs one replication. Identical configs give bit-identical reports.
SimReport run_simulation(const MoAConfig& config, const RunOptions& options = {});

/// Applies the growth heuristic to measured slopes. Exposed for tests.
Verdict classify_growth(const MoAConfig& config, const SimReport& report);

/// n (R_in - 1/alpha_max): the fluid-limit backlog growth rate.
double theoretical_overload_rate(const MoAConfig& config);

struct MetricSummary {
  double mean = 0.0;
  std::optional<double> std_error;  // absent for a single replication
};

struct ReplicatedReport {
  std::vector<SimReport> runs;
  std::vector<std::uint64_t> seeds;
  MetricSummary avg_queue_size;
  MetricSummary mean_latency;
  MetricSummary latency_p50;
  MetricSummary latency_p95;
  MetricSummary growth_slope;
  MetricSummary time_avg_in_system;     // node mean per run
  MetricSummary time_avg_queue_waiting; // node mean per run
  MetricSummary utilization_measured;   // node mean per run
  Verdict verdict = Verdict::StableLooking;  // worst over runs
};

/// Runs seeds seed, seed+1, ... and aggregates mean and standard error.
/// `workers` > 1 runs replications on separate threads; results are identical.
ReplicatedReport replicate(const MoAConfig& config, std::size_t replications,
                           unsigned workers = 1);

/// Aggregation step of replicate() over already finished runs.
ReplicatedReport aggregate_runs(std::vector<SimReport> runs,
                                std::vector<std::uint64_t> seeds);

}  // namespace dmoa
