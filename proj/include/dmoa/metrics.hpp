#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dmoa/protocol.hpp"

namespace dmoa {

struct Window {
  double begin = 0.0;
  double end = 0.0;

  double length() const { return end - begin; }
};

/// A piecewise-constant signal integrated exactly over a measurement window.
///
/// Besides the time average it keeps the first moment, which gives the
/// continuous least-squares slope of the signal against time on the covered
/// part of the window.
class StepIntegral {
 public:
  explicit StepIntegral(Window window, double initial = 0.0);

  /// The signal takes `value` from `time` on. Times must be non-decreasing.
  void set(double time, double value);
  /// Stops integration at min(end_time, window.end).
  void close(double end_time);

  double mean() const;
  double slope() const;
  double value_at_begin() const;
  double current() const { return value_; }
  double covered() const { return covered_end_ - window_.begin; }

 private:
  void accumulate(double until);

  Window window_;
  double last_time_;
  double value_;
  double area_ = 0.0;
  double moment_ = 0.0;  // integral of (t - begin) * v(t)
  double covered_end_;
  std::optional<double> at_begin_;
};

struct QueueSample {
  double time = 0.0;
  NodeId node = 0;
  std::size_t waiting = 0;
  std::size_t in_system = 0;
};

struct CompletionSample {
  double created_at = 0.0;
  double completed_at = 0.0;
};

struct MetricsTrace {
  std::size_t nodes = 0;
  std::vector<QueueSample> queue;  // time-ordered; every node starts empty
  std::vector<CompletionSample> completions;
};

struct WindowMetrics {
  std::vector<double> time_avg_queue_waiting;
  std::vector<double> time_avg_in_system;
  double avg_queue_size = 0.0;  // mean over nodes of time_avg_queue_waiting
  double mean_latency = 0.0;    // NaN when no job qualifies
  double latency_p50 = 0.0;
  double latency_p95 = 0.0;
  std::uint64_t completed_jobs = 0;
  double queued_growth_slope = 0.0;  // slope of total waiting count
  double total_waiting_at_begin = 0.0;
  double total_waiting_at_end = 0.0;
};

/// Streaming form used by the simulator. Latencies count only jobs created
/// at or after window.begin and completed by the end of measurement.
class MetricsCollector {
 public:
  MetricsCollector(std::size_t nodes, Window window);

  void observe_queue(double time, NodeId node, std::size_t waiting,
                     std::size_t in_system);
  void observe_completion(double created_at, double completed_at);
  WindowMetrics finish(double end_time);

 private:
  Window window_;
  std::vector<StepIntegral> waiting_;
  std::vector<StepIntegral> in_system_;
  std::vector<std::size_t> node_waiting_;
  std::size_t total_waiting_ = 0;
  StepIntegral total_;
  std::vector<double> latencies_;
};

/// Throws ConfigError if the window is empty.
WindowMetrics compute_metrics(const MetricsTrace& trace, Window window);

/// Nearest-rank percentile of an ascending sample, q in (0, 1].
double percentile_sorted(const std::vector<double>& sorted, double q);

}  // namespace dmoa
