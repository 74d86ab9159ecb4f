#include "dmoa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmoa/errors.hpp"

namespace dmoa {

StepIntegral::StepIntegral(Window window, double initial)
    : window_(window),
      last_time_(window.begin),
      value_(initial),
      covered_end_(window.begin) {}

void StepIntegral::accumulate(double until) {
  const double a = std::max(last_time_, window_.begin);
  const double b = std::min(until, window_.end);
  if (b > a) {
    const double ta = a - window_.begin;
    const double tb = b - window_.begin;
    area_ += value_ * (tb - ta);
    moment_ += value_ * 0.5 * (tb * tb - ta * ta);
    covered_end_ = b;
  }
  last_time_ = std::max(last_time_, until);
}

void StepIntegral::set(double time, double value) {
  if (!at_begin_ && time > window_.begin) at_begin_ = value_;
  accumulate(time);
  value_ = value;
}

void StepIntegral::close(double end_time) {
  if (!at_begin_) at_begin_ = value_;
  accumulate(end_time);
}

double StepIntegral::mean() const {
  const double len = covered();
  return len > 0.0 ? area_ / len : 0.0;
}

double StepIntegral::slope() const {
  const double len = covered();
  if (!(len > 0.0)) return 0.0;
  const double centered = moment_ - 0.5 * len * area_;
  return centered / (len * len * len / 12.0);
}

double StepIntegral::value_at_begin() const {
  return at_begin_.value_or(value_);
}

MetricsCollector::MetricsCollector(std::size_t nodes, Window window)
    : window_(window),
      waiting_(nodes, StepIntegral(window)),
      in_system_(nodes, StepIntegral(window)),
      node_waiting_(nodes, 0),
      total_(window) {
  if (!(window.end > window.begin)) {
    throw ConfigError("window: warmup must be < horizon");
  }
}

void MetricsCollector::observe_queue(double time, NodeId node,
                                     std::size_t waiting,
                                     std::size_t in_system) {
  waiting_[node].set(time, static_cast<double>(waiting));
  in_system_[node].set(time, static_cast<double>(in_system));
  total_waiting_ = total_waiting_ - node_waiting_[node] + waiting;
  node_waiting_[node] = waiting;
  total_.set(time, static_cast<double>(total_waiting_));
}

void MetricsCollector::observe_completion(double created_at,
                                          double completed_at) {
  if (created_at >= window_.begin && completed_at <= window_.end) {
    latencies_.push_back(completed_at - created_at);
  }
}

WindowMetrics MetricsCollector::finish(double end_time) {
  WindowMetrics m;
  for (auto& w : waiting_) {
    w.close(end_time);
    m.time_avg_queue_waiting.push_back(w.mean());
  }
  for (auto& s : in_system_) {
    s.close(end_time);
    m.time_avg_in_system.push_back(s.mean());
  }
  total_.close(end_time);

  if (!m.time_avg_queue_waiting.empty()) {
    m.avg_queue_size = std::accumulate(m.time_avg_queue_waiting.begin(),
                                       m.time_avg_queue_waiting.end(), 0.0) /
                       static_cast<double>(m.time_avg_queue_waiting.size());
  }
  m.queued_growth_slope = total_.slope();
  m.total_waiting_at_begin = total_.value_at_begin();
  m.total_waiting_at_end = total_.current();

  std::sort(latencies_.begin(), latencies_.end());
  m.completed_jobs = latencies_.size();
  if (latencies_.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.mean_latency = m.latency_p50 = m.latency_p95 = nan;
  } else {
    m.mean_latency =
        std::accumulate(latencies_.begin(), latencies_.end(), 0.0) /
        static_cast<double>(latencies_.size());
    m.latency_p50 = percentile_sorted(latencies_, 0.50);
    m.latency_p95 = percentile_sorted(latencies_, 0.95);
  }
  return m;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

WindowMetrics compute_metrics(const MetricsTrace& trace, Window window) {
  MetricsCollector collector(trace.nodes, window);
  double last = window.begin;
  for (const auto& s : trace.queue) {
    collector.observe_queue(s.time, s.node, s.waiting, s.in_system);
    last = std::max(last, s.time);
  }
  for (const auto& c : trace.completions) {
    collector.observe_completion(c.created_at, c.completed_at);
  }
  return collector.finish(std::max(last, window.end));
}

}  // namespace dmoa
