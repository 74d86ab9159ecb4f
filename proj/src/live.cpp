#include "dmoa/live.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <istream>
#include <map>
#include <mutex>
#include <thread>

#include "dmoa/errors.hpp"

namespace dmoa {
namespace {

using Clock = std::chrono::steady_clock;

class LiveRunner {
 public:
  LiveRunner(const ProtocolParams& params, std::vector<LiveNode> nodes,
             std::uint64_t seed)
      : params_(params),
        nodes_(std::move(nodes)),
        queues_(params.n),
        wake_(params.n),
        t0_(Clock::now()) {
    for (NodeId i = 0; i < params.n; ++i) {
      neighbor_rngs_.push_back(Rng::substream(seed, "neighbors", i));
    }
  }

  std::vector<LiveRecord> run(const std::vector<LivePrompt>& prompts) {
    records_.resize(prompts.size());
    {
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        Prompt p{static_cast<JobId>(i), prompts[i].origin, prompts[i].text, now()};
        auto start = spawn_job(p, params_, neighbor_rngs_[p.origin]);
        LiveRecord& rec = records_[i];
        rec.job = p.id;
        rec.origin = p.origin;
        rec.prompt = p.text;
        rec.created_at = p.created_at;
        jobs_.emplace(p.id, std::move(start.job));
        for (auto& t : start.dispatches) enqueue(std::move(t));
      }
      remaining_ = prompts.size();
    }

    std::vector<std::thread> workers;
    for (NodeId i = 0; i < params_.n; ++i) {
      workers.emplace_back([this, i] { serve(i); });
    }
    {
      std::unique_lock lock(mu_);
      done_.wait(lock, [this] { return remaining_ == 0; });
      stop_ = true;
    }
    for (auto& w : wake_) w.notify_all();
    for (auto& w : workers) w.join();
    return std::move(records_);
  }

 private:
  double now() const {
    return std::chrono::duration<double>(Clock::now() - t0_).count();
  }

  // Requires mu_.
  void enqueue(InferenceTask task) {
    task.enqueued_at = now();
    const NodeId to = task.assigned_node;
    queues_[to].push_back(std::move(task));
    wake_[to].notify_one();
  }

  // Requires mu_.
  void finish(JobId id) {
    jobs_.erase(id);
    --remaining_;
    if (remaining_ == 0) done_.notify_all();
  }

  void serve(NodeId node) {
    LiveNode& self = nodes_[node];
    std::unique_lock lock(mu_);
    for (;;) {
      wake_[node].wait(lock, [&] { return stop_ || !queues_[node].empty(); });
      if (queues_[node].empty()) return;
      InferenceTask task = std::move(queues_[node].front());
      queues_[node].pop_front();
      if (!jobs_.contains(task.job_id())) continue;  // job already failed

      StageTiming stage{task.id, task.kind, node, task.enqueued_at, now(), 0.0, 0.0};
      const auto request = make_request(task.payload, self.model,
                                        self.temperature, self.max_tokens);
      lock.unlock();
      InferenceResult result;
      std::string error;
      try {
        result = self.backend->infer(request);
      } catch (const std::exception& e) {
        error = e.what();
      }
      lock.lock();

      auto it = jobs_.find(task.job_id());
      if (it == jobs_.end()) continue;
      LiveRecord& rec = records_[task.job_id()];
      stage.finished_at = now();
      stage.backend_latency = result.measured_latency;
      if (!error.empty()) {
        rec.error = "node " + std::to_string(node) + " " + to_string(task.kind) +
                    ": " + error;
        rec.completed_at = stage.finished_at;
        rec.latency = rec.completed_at - rec.created_at;
        finish(task.job_id());
        continue;
      }
      rec.stages.push_back(stage);

      JobState& job = it->second;
      ResponseMsg msg{task.id, node, std::move(result.text), stage.finished_at};
      auto next = advance_job(job, std::move(msg), stage.finished_at, params_,
                              neighbor_rngs_[job.origin]);
      for (auto& t : next) enqueue(std::move(t));
      if (job.phase == JobPhase::Completed) {
        rec.ok = true;
        rec.response = job.final_response->text;
        rec.completed_at = *job.completed_at;
        rec.latency = rec.completed_at - rec.created_at;
        finish(task.job_id());
      }
    }
  }

  ProtocolParams params_;
  std::vector<LiveNode> nodes_;
  std::mutex mu_;
  std::vector<std::deque<InferenceTask>> queues_;
  std::vector<std::condition_variable> wake_;
  std::condition_variable done_;
  std::vector<Rng> neighbor_rngs_;
  std::map<JobId, JobState> jobs_;
  std::vector<LiveRecord> records_;
  std::size_t remaining_ = 0;
  bool stop_ = false;
  Clock::time_point t0_;
};

}  // namespace

std::vector<LiveRecord> run_live(const ProtocolParams& params,
                                 std::vector<LiveNode> nodes,
                                 const std::vector<LivePrompt>& prompts,
                                 std::uint64_t seed) {
  params.validate();
  if (nodes.size() != params.n) {
    throw ConfigError("nodes: expected " + std::to_string(params.n) +
                      " backends, got " + std::to_string(nodes.size()));
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].backend) {
      throw ConfigError("nodes[" + std::to_string(i) + "]: no backend");
    }
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].origin >= params.n) {
      throw ConfigError("prompts[" + std::to_string(i) + "].origin: outside [0, n)");
    }
  }
  if (prompts.empty()) return {};
  LiveRunner runner(params, std::move(nodes), seed);
  return runner.run(prompts);
}

std::vector<LivePrompt> parse_prompts(std::istream& in, std::uint32_t n) {
  std::vector<LivePrompt> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "prompts line " + std::to_string(lineno);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ConfigError(where + ": not a JSON object");
    }
    if (!j.contains("origin") || !j["origin"].is_number_unsigned()) {
      throw ConfigError(where + ": origin: expected a node index");
    }
    if (!j.contains("prompt") || !j["prompt"].is_string()) {
      throw ConfigError(where + ": prompt: expected a string");
    }
    LivePrompt p{j["origin"].get<NodeId>(), j["prompt"].get<std::string>()};
    if (p.origin >= n) throw ConfigError(where + ": origin: outside [0, n)");
    if (p.text.empty()) throw ConfigError(where + ": prompt: empty");
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json to_json(const LiveRecord& record) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : record.stages) {
    stages.push_back({{"task", to_string(s.task)},
                      {"kind", to_string(s.kind)},
                      {"node", s.node},
                      {"enqueued_at", s.enqueued_at},
                      {"started_at", s.started_at},
                      {"finished_at", s.finished_at},
                      {"backend_latency", s.backend_latency}});
  }
  nlohmann::json j = {{"job", record.job},
                      {"origin", record.origin},
                      {"prompt", record.prompt},
                      {"status", record.ok ? "ok" : "failed"},
                      {"latency", record.latency},
                      {"stages", std::move(stages)}};
  if (record.ok) {
    j["response"] = record.response;
  } else {
    j["error"] = record.error;
  }
  return j;
}

}  // namespace dmoa
