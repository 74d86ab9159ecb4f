#include "dmoa/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>
#include <queue>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dmoa/backend.hpp"
#include "dmoa/errors.hpp"
#include "dmoa/metrics.hpp"
#include "dmoa/queueing_model.hpp"

namespace dmoa {

void MoAConfig::validate() const {
  params.validate();
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda: must be a positive number");
  }
  if (service.size() != params.n) {
    throw ConfigError("service: expected " + std::to_string(params.n) +
                      " entries, got " + std::to_string(service.size()));
  }
  for (std::size_t i = 0; i < service.size(); ++i) {
    service[i].validate("service[" + std::to_string(i) + "]");
  }
  network_delay.validate("network_delay");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ConfigError("horizon: must be a positive number");
  }
  if (!(warmup >= 0.0) || !(warmup < horizon)) {
    throw ConfigError("warmup: must satisfy 0 <= warmup < horizon");
  }
  if (queue_guard && *queue_guard == 0) {
    throw ConfigError("queue_guard: must be positive");
  }
  for (std::size_t i = 0; i < injected.size(); ++i) {
    if (injected[i].origin >= params.n) {
      throw ConfigError("injected[" + std::to_string(i) +
                        "].origin: outside [0, n)");
    }
    if (!(injected[i].time >= 0.0)) {
      throw ConfigError("injected[" + std::to_string(i) + "].time: negative");
    }
  }
}

double MoAConfig::alpha_max() const {
  double m = 0.0;
  for (const auto& s : service) m = std::max(m, s.mean);
  return m;
}

MoAConfig make_config(ProtocolParams params, double lambda, ServiceSpec service,
                      double horizon, std::uint64_t seed) {
  MoAConfig c;
  c.params = params;
  c.lambda = lambda;
  c.service.assign(params.n, service);
  c.horizon = horizon;
  c.warmup = 0.1 * horizon;
  c.seed = seed;
  return c;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::StableLooking:
      return "stable-looking";
    case Verdict::Growing:
      return "growing";
    case Verdict::AbortedByGuard:
      return "aborted-by-guard";
  }
  return "unknown";
}

double theoretical_overload_rate(const MoAConfig& config) {
  const double r_in =
      node_input_rate(config.lambda, config.params.k, config.params.layers);
  return static_cast<double>(config.params.n) *
         (r_in - 1.0 / config.alpha_max());
}

Verdict classify_growth(const MoAConfig& config, const SimReport& report) {
  if (report.verdict == Verdict::AbortedByGuard) return Verdict::AbortedByGuard;
  // Threshold is 5% of the overload magnitude; below the boundary the
  // magnitude of the (negative) rate sets the scale.
  const double threshold = 0.05 * std::abs(theoretical_overload_rate(config));
  const double window = report.end_time - config.warmup;
  const bool slope_up = report.growth_slope > threshold;
  const bool net_up =
      report.backlog_final - report.backlog_at_warmup > threshold * window;
  return slope_up && net_up ? Verdict::Growing : Verdict::StableLooking;
}

namespace {

enum class EventKind : std::uint8_t {
  Arrival,
  Delivery,
  ServiceComplete,
  ResponseDelivery
};

constexpr std::string_view kind_name(EventKind k) {
  switch (k) {
    case EventKind::Arrival:
      return "arrival";
    case EventKind::Delivery:
      return "delivery";
    case EventKind::ServiceComplete:
      return "service_complete";
    case EventKind::ResponseDelivery:
      return "response_delivery";
  }
  return "unknown";
}

constexpr std::uint32_t kNoSlot = std::numeric_limits<std::uint32_t>::max();

struct Event {
  double time;
  std::uint64_t seq;
  EventKind kind;
  NodeId node;
  std::uint32_t slot;  // task, response or injected-prompt index
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

// Stable-index storage with slot reuse.
template <typename T>
class Slab {
 public:
  std::uint32_t put(T value) {
    if (!free_.empty()) {
      const auto s = free_.back();
      free_.pop_back();
      items_[s] = std::move(value);
      return s;
    }
    items_.push_back(std::move(value));
    return static_cast<std::uint32_t>(items_.size() - 1);
  }
  T& at(std::uint32_t s) { return items_[s]; }
  T take(std::uint32_t s) {
    T v = std::move(items_[s]);
    free_.push_back(s);
    return v;
  }

 private:
  std::vector<T> items_;
  std::vector<std::uint32_t> free_;
};

struct OwnedJob {
  JobState state;
  std::uint64_t services = 0;
};

struct Node {
  std::deque<std::uint32_t> queue;
  std::optional<std::uint32_t> in_service;
  std::unordered_map<JobId, OwnedJob> buffer;
  Rng arrival_rng;
  Rng service_rng;
  Rng neighbor_rng;
  Rng delay_rng;
  std::uint64_t tasks_served = 0;
  std::uint64_t deliveries_in_window = 0;
};

class Engine {
 public:
  Engine(const MoAConfig& config, const RunOptions& options)
      : config_(config),
        options_(options),
        window_{config.warmup, config.horizon},
        metrics_(config.params.n, window_),
        backlog_(window_) {
    nodes_.reserve(config.params.n);
    busy_.reserve(config.params.n);
    for (NodeId i = 0; i < config.params.n; ++i) {
      nodes_.push_back(Node{{},
                            std::nullopt,
                            {},
                            Rng::substream(config.seed, "arrival", i),
                            Rng::substream(config.seed, "service", i),
                            Rng::substream(config.seed, "neighbors", i),
                            Rng::substream(config.seed, "delay", i)});
      busy_.emplace_back(window_);
    }
    per_job_ = total_inferences(config.params);
  }

  SimReport run() {
    for (std::uint32_t i = 0; i < config_.injected.size(); ++i) {
      push(config_.injected[i].time, EventKind::Arrival,
           config_.injected[i].origin, i);
    }
    if (config_.generate_arrivals) {
      for (NodeId i = 0; i < config_.params.n; ++i) {
        const double t = sample_interarrival(config_.arrival, config_.lambda,
                                             nodes_[i].arrival_rng);
        push(t, EventKind::Arrival, i, kNoSlot);
      }
    }

    bool aborted = false;
    double now = 0.0;
    while (!events_.empty() && events_.top().time <= config_.horizon) {
      const Event ev = events_.top();
      events_.pop();
      now = ev.time;
      dispatch(ev);
      if (config_.queue_guard && total_waiting_ > *config_.queue_guard) {
        aborted = true;
        break;
      }
    }
    const double end = aborted ? now : config_.horizon;
    return report(end, aborted);
  }

 private:
  void push(double time, EventKind kind, NodeId node, std::uint32_t slot) {
    events_.push(Event{time, next_seq_++, kind, node, slot});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EventKind::Arrival:
        on_arrival(ev);
        break;
      case EventKind::Delivery:
        on_delivery(ev);
        break;
      case EventKind::ServiceComplete:
        on_service_complete(ev);
        break;
      case EventKind::ResponseDelivery:
        on_response(ev);
        break;
    }
  }

  void emit(const Event& ev, JobId job, std::optional<std::uint32_t> task) {
    if (!options_.trace && !options_.observer) return;
    const TraceRecord rec{ev.time, ev.seq, kind_name(ev.kind), ev.node, job,
                          task};
    if (options_.observer) options_.observer->on_event(rec);
    if (options_.trace) {
      nlohmann::json j = {{"time", rec.time}, {"seq", rec.seq},
                          {"kind", rec.kind}, {"node", rec.node},
                          {"job", rec.job}};
      j["task"] = task ? nlohmann::json(*task) : nlohmann::json(nullptr);
      *options_.trace << j.dump() << '\n';
    }
  }

  void observe(double now, NodeId id) {
    const Node& node = nodes_[id];
    const std::size_t busy = node.in_service ? 1 : 0;
    metrics_.observe_queue(now, id, node.queue.size(),
                           node.queue.size() + busy);
    busy_[id].set(now, static_cast<double>(busy));
  }

  void send(InferenceTask task, NodeId from, double now) {
    const NodeId to = task.assigned_node;
    const double delay =
        to == from ? 0.0
                   : sample_delay(config_.network_delay, nodes_[from].delay_rng);
    push(now + delay, EventKind::Delivery, to, tasks_.put(std::move(task)));
  }

  void on_arrival(const Event& ev) {
    Prompt prompt;
    prompt.id = next_job_++;
    prompt.origin = ev.node;
    prompt.created_at = ev.time;
    Node& node = nodes_[ev.node];
    if (ev.slot == kNoSlot) {
      prompt.text = "prompt " + std::to_string(prompt.id);
      const double next = ev.time + sample_interarrival(
                                        config_.arrival, config_.lambda,
                                        node.arrival_rng);
      if (next <= config_.horizon) push(next, EventKind::Arrival, ev.node, kNoSlot);
    } else {
      prompt.text = config_.injected[ev.slot].text;
    }
    emit(ev, prompt.id, std::nullopt);

    auto start = spawn_job(prompt, config_.params, node.neighbor_rng);
    if (ev.time >= window_.begin) ++generated_in_window_;
    backlog_count_ += per_job_;
    backlog_.set(ev.time, static_cast<double>(backlog_count_));
    node.buffer.emplace(prompt.id, OwnedJob{std::move(start.job), 0});
    for (auto& task : start.dispatches) send(std::move(task), ev.node, ev.time);
  }

  void start_service(NodeId id, double now) {
    Node& node = nodes_[id];
    const auto slot = node.queue.front();
    node.queue.pop_front();
    --total_waiting_;
    node.in_service = slot;
    if (options_.observer) {
      options_.observer->on_service_start(now, id, tasks_.at(slot).id,
                                          node.queue.size());
    }
    const double duration =
        sample_service(config_.service[id], node.service_rng);
    push(now + duration, EventKind::ServiceComplete, id, slot);
  }

  void on_delivery(const Event& ev) {
    Node& node = nodes_[ev.node];
    InferenceTask& task = tasks_.at(ev.slot);
    task.enqueued_at = ev.time;
    emit(ev, task.id.job, task.id.seq);
    if (options_.observer) options_.observer->on_enqueue(ev.time, ev.node, task.id);
    if (ev.time >= window_.begin) ++node.deliveries_in_window;

    node.queue.push_back(ev.slot);
    ++total_waiting_;
    if (!node.in_service) start_service(ev.node, ev.time);
    observe(ev.time, ev.node);
  }

  void on_service_complete(const Event& ev) {
    Node& node = nodes_[ev.node];
    InferenceTask task = tasks_.take(ev.slot);
    emit(ev, task.id.job, task.id.seq);
    node.in_service.reset();
    ++node.tasks_served;

    --backlog_count_;
    backlog_.set(ev.time, static_cast<double>(backlog_count_));
    auto& owner = nodes_[task.origin].buffer;
    if (auto it = owner.find(task.id.job); it != owner.end()) {
      ++it->second.services;
    }

    ResponseMsg msg;
    msg.task_id = task.id;
    msg.producer = ev.node;
    msg.text = mock_response_text(ev.node, task.payload);
    msg.produced_at = ev.time;
    const double delay =
        task.origin == ev.node
            ? 0.0
            : sample_delay(config_.network_delay, node.delay_rng);
    push(ev.time + delay, EventKind::ResponseDelivery, task.origin,
         responses_.put(std::move(msg)));

    if (!node.queue.empty()) start_service(ev.node, ev.time);
    observe(ev.time, ev.node);
  }

  void on_response(const Event& ev) {
    ResponseMsg msg = responses_.take(ev.slot);
    emit(ev, msg.task_id.job, msg.task_id.seq);
    Node& node = nodes_[ev.node];
    auto it = node.buffer.find(msg.task_id.job);
    if (it == node.buffer.end()) {
      throw ProtocolViolation("response for unknown job " +
                              std::to_string(msg.task_id.job));
    }
    OwnedJob& owned = it->second;
    auto next = advance_job(owned.state, std::move(msg), ev.time,
                            config_.params, node.neighbor_rng);
    for (auto& task : next) send(std::move(task), ev.node, ev.time);

    if (owned.state.phase == JobPhase::Completed) {
      ++total_completed_;
      if (owned.state.inference_count != per_job_ || owned.services != per_job_) {
        ++conservation_violations_;
      }
      metrics_.observe_completion(owned.state.original_prompt.created_at,
                                  *owned.state.completed_at);
      if (options_.observer) {
        options_.observer->on_job_complete(owned.state, owned.services);
      }
      node.buffer.erase(it);
    }
  }

  SimReport report(double end, bool aborted) {
    SimReport r;
    r.end_time = end;
    const WindowMetrics m = metrics_.finish(end);
    backlog_.close(end);
    const double covered = std::max(0.0, std::min(end, window_.end) - window_.begin);

    for (NodeId i = 0; i < config_.params.n; ++i) {
      busy_[i].close(end);
      NodeReport nr;
      nr.time_avg_queue_waiting = m.time_avg_queue_waiting[i];
      nr.time_avg_in_system = m.time_avg_in_system[i];
      nr.utilization_measured = busy_[i].mean();
      nr.input_rate = covered > 0.0
                          ? static_cast<double>(nodes_[i].deliveries_in_window) / covered
                          : 0.0;
      nr.tasks_served = nodes_[i].tasks_served;
      r.per_node.push_back(nr);
    }
    r.avg_queue_size = m.avg_queue_size;
    r.mean_latency = m.mean_latency;
    r.latency_p50 = m.latency_p50;
    r.latency_p95 = m.latency_p95;
    r.completed_jobs = m.completed_jobs;
    r.generated_jobs = generated_in_window_;
    r.growth_slope = backlog_.slope();
    r.queued_growth_slope = m.queued_growth_slope;
    r.backlog_at_warmup = backlog_.value_at_begin();
    r.backlog_final = backlog_.current();
    r.conservation_violations = conservation_violations_;
    r.total_completed_jobs = total_completed_;
    r.verdict = aborted ? Verdict::AbortedByGuard : Verdict::StableLooking;
    r.verdict = classify_growth(config_, r);
    return r;
  }

  const MoAConfig& config_;
  const RunOptions& options_;
  Window window_;
  MetricsCollector metrics_;
  StepIntegral backlog_;
  std::vector<StepIntegral> busy_;
  std::vector<Node> nodes_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> events_;
  Slab<InferenceTask> tasks_;
  Slab<ResponseMsg> responses_;
  std::uint64_t next_seq_ = 0;
  JobId next_job_ = 0;
  std::uint64_t per_job_ = 1;
  std::uint64_t backlog_count_ = 0;
  std::size_t total_waiting_ = 0;
  std::uint64_t generated_in_window_ = 0;
  std::uint64_t total_completed_ = 0;
  std::uint64_t conservation_violations_ = 0;
};

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

double node_mean(const SimReport& r, double NodeReport::*field) {
  double sum = 0.0;
  for (const auto& nr : r.per_node) sum += nr.*field;
  return r.per_node.empty() ? 0.0 : sum / static_cast<double>(r.per_node.size());
}

}  // namespace

SimReport run_simulation(const MoAConfig& config, const RunOptions& options) {
  config.validate();
  Engine engine(config, options);
  return engine.run();
}

ReplicatedReport replicate(const MoAConfig& config, std::size_t replications,
                           unsigned workers) {
  if (replications == 0) throw ConfigError("replications: must be >= 1");
  config.validate();

  ReplicatedReport out;
  out.runs.resize(replications);
  for (std::size_t i = 0; i < replications; ++i) out.seeds.push_back(config.seed + i);

  auto run_one = [&](std::size_t i) {
    MoAConfig c = config;
    c.seed = out.seeds[i];
    out.runs[i] = run_simulation(c);
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < replications; ++i) run_one(i);
  } else {
    // Each replication owns its whole state; results land in fixed slots.
    for (std::size_t base = 0; base < replications; base += workers) {
      std::vector<std::future<void>> batch;
      for (std::size_t i = base; i < std::min(replications, base + workers); ++i) {
        batch.push_back(std::async(std::launch::async, run_one, i));
      }
      for (auto& f : batch) f.get();
    }
  }

  return aggregate_runs(std::move(out.runs), std::move(out.seeds));
}

ReplicatedReport aggregate_runs(std::vector<SimReport> runs,
                                std::vector<std::uint64_t> seeds) {
  ReplicatedReport out;
  out.runs = std::move(runs);
  out.seeds = std::move(seeds);
  auto collect = [&](auto get) {
    std::vector<double> xs;
    for (const auto& r : out.runs) xs.push_back(get(r));
    return summarize(xs);
  };
  out.avg_queue_size = collect([](const SimReport& r) { return r.avg_queue_size; });
  out.mean_latency = collect([](const SimReport& r) { return r.mean_latency; });
  out.latency_p50 = collect([](const SimReport& r) { return r.latency_p50; });
  out.latency_p95 = collect([](const SimReport& r) { return r.latency_p95; });
  out.growth_slope = collect([](const SimReport& r) { return r.growth_slope; });
  out.time_avg_in_system = collect(
      [](const SimReport& r) { return node_mean(r, &NodeReport::time_avg_in_system); });
  out.time_avg_queue_waiting = collect([](const SimReport& r) {
    return node_mean(r, &NodeReport::time_avg_queue_waiting);
  });
  out.utilization_measured = collect([](const SimReport& r) {
    return node_mean(r, &NodeReport::utilization_measured);
  });
  for (const auto& r : out.runs) {
    out.verdict = std::max(out.verdict, r.verdict);
  }
  return out;
}

}  // namespace dmoa
