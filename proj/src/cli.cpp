#include "dmoa/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "dmoa/config.hpp"
#include "dmoa/errors.hpp"
#include "dmoa/live.hpp"
#include "dmoa/queueing_model.hpp"
#include "dmoa/report_io.hpp"

namespace dmoa {
namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(std::ostream& err, std::string_view category, const std::string& cause) {
  err << "error: " << category << ": " << one_line(cause) << '\n';
  return kExitError;
}

// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw std::ios_base::failure("cannot open '" + path + "' for writing");
    stream_ = file_.get();
  }
  std::ostream& get() { return *stream_; }
  void close(const std::string& path) {
    if (!file_) {
      stream_->flush();
      return;
    }
    file_->close();
    if (!*file_) throw std::ios_base::failure("write to '" + path + "' failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

struct StabilityArgs {
  std::uint32_t n = 0;
  std::uint32_t k = 0;
  std::uint32_t layers = 0;
  double lambda = 0.0;
  std::vector<double> alpha;
};

int cmd_stability(const StabilityArgs& a, std::ostream& out) {
  if (a.n != 0) ProtocolParams{a.n, a.k, a.layers}.validate();
  if (a.n != 0 && a.alpha.size() > 1 && a.alpha.size() != a.n) {
    throw ConfigError("alpha: list has " + std::to_string(a.alpha.size()) +
                      " entries for n = " + std::to_string(a.n));
  }
  const RateSummary s = is_stable_heterogeneous(a.lambda, a.k, a.layers, a.alpha);
  out << std::setprecision(10);
  out << "r_prop_in: " << s.r_prop_in << '\n'
      << "r_layer_in: " << s.r_layer_in << '\n'
      << "r_in: " << s.r_in << '\n'
      << "r_out: " << s.r_out << '\n'
      << "alpha_used: " << s.alpha << '\n'
      << "utilization: " << s.utilization << '\n'
      << "stable: " << (s.stable ? "true" : "false") << '\n'
      << "max_stable_lambda: " << max_stable_lambda(a.k, a.layers, s.alpha) << '\n';
  return kExitOk;
}

struct RunArgs {
  std::string config;
  std::string out;
  std::string format = "table";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::string grid;
  std::string trace;
  std::string prompts;
  unsigned workers = 1;
};

RunConfig load(const RunArgs& a) {
  RunConfig rc = parse_config(a.config);
  if (a.seed) rc.sim.seed = *a.seed;
  if (a.replications) {
    if (*a.replications == 0) throw ConfigError("replications: must be >= 1");
    rc.replications = *a.replications;
  }
  return rc;
}

int cmd_simulate(const RunArgs& a, std::ostream& out) {
  const RunConfig rc = load(a);
  if (rc.mode != RunMode::Simulate) {
    throw ConfigError("mode: simulate needs mode 'simulate'");
  }
  const auto format = parse_format(a.format);
  if (!format) throw ConfigError("format: expected table, csv or records");

  ReplicatedReport report;
  if (!a.trace.empty()) {
    if (rc.replications != 1) {
      throw ConfigError("trace: only available with a single replication");
    }
    Sink trace(a.trace, out);
    RunOptions options;
    options.trace = &trace.get();
    SimReport run = run_simulation(rc.sim, options);
    trace.close(a.trace);
    report = aggregate_runs({std::move(run)}, {rc.sim.seed});
  } else {
    report = replicate(rc.sim, rc.replications, a.workers);
  }

  Sink sink(a.out, out);
  write_simulation(sink.get(), rc.sim, report, *format);
  sink.close(a.out);

  switch (report.verdict) {
    case Verdict::StableLooking:
      return kExitOk;
    case Verdict::Growing:
      return kExitGrowing;
    case Verdict::AbortedByGuard:
      return kExitAborted;
  }
  return kExitOk;
}

int cmd_sweep(const RunArgs& a, std::ostream& out) {
  const RunConfig rc = load(a);
  const auto grid = a.grid.empty() ? rc.grid : parse_grid(a.grid);
  const auto format = parse_format(a.format);
  if (!format || *format == OutputFormat::Records) {
    throw ConfigError("format: sweep supports csv or table");
  }
  const auto rows = run_sweep(rc.sim, grid, rc.replications, a.workers);
  Sink sink(a.out, out);
  if (*format == OutputFormat::Csv) write_sweep_csv(sink.get(), rows);
  else write_sweep_table(sink.get(), rows);
  sink.close(a.out);
  return kExitOk;
}

int cmd_live(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load(a);
  if (rc.mode != RunMode::Live) throw ConfigError("mode: live needs mode 'live'");
  std::ifstream prompt_file(a.prompts);
  if (!prompt_file) throw ConfigError("prompts: cannot open '" + a.prompts + "'");
  const auto prompts = parse_prompts(prompt_file, rc.sim.params.n);

  std::vector<LiveNode> nodes;
  for (NodeId i = 0; i < rc.backends.size(); ++i) {
    const BackendSpec& spec = rc.backends[i];
    LiveNode node;
    node.backend = make_backend(spec, i, rc.sim.seed);
    node.model = spec.kind == BackendKind::Http ? spec.http.model : "mock";
    node.temperature = spec.temperature;
    node.max_tokens = spec.max_tokens;
    const HealthReport h = node.backend->validate();
    if (!h.healthy) {
      err << "error: backend: node " << i << " unhealthy: " << one_line(h.cause) << '\n';
      return kExitError;
    }
    nodes.push_back(std::move(node));
  }

  const auto records = run_live(rc.sim.params, std::move(nodes), prompts, rc.sim.seed);
  Sink sink(a.out, out);
  for (const auto& r : records) sink.get() << to_json(r).dump() << '\n';
  sink.close(a.out);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Distributed mixture-of-agents protocol engine and simulator", "dmoa"};
  app.require_subcommand(1);

  StabilityArgs st;
  auto* stability = app.add_subcommand("stability", "Closed-form rates and stability verdict");
  stability->add_option("-n,--nodes", st.n, "Node count (enables k <= n-1 check)");
  stability->add_option("-k,--fanout", st.k, "Neighbors per layer")->required();
  stability->add_option("-M,--layers", st.layers, "Number of layers")->required();
  stability->add_option("--lambda", st.lambda, "Per-user arrival rate")->required();
  stability->add_option("--alpha", st.alpha, "Mean inference time, or comma list per node")
      ->required()
      ->delimiter(',');

  RunArgs ra;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", ra.config, "Run configuration (JSON)")->required();
    cmd->add_option("--out", ra.out, "Output path (default stdout)");
  };
  auto* simulate = app.add_subcommand("simulate", "Run the discrete-event simulation");
  add_common(simulate);
  simulate->add_option("--format", ra.format, "table | csv | records");
  simulate->add_option("--seed", ra.seed, "Override the master seed");
  simulate->add_option("--replications", ra.replications, "Independent replications");
  simulate->add_option("--trace", ra.trace, "Write the event trace (NDJSON) here");
  simulate->add_option("--workers", ra.workers, "Parallel replication workers");

  auto* sweep = app.add_subcommand("sweep", "Simulate a grid of (M, k) configurations");
  add_common(sweep);
  sweep->add_option("--grid", ra.grid, "M:k[:lambda[:alpha]],... (overrides config grid)");
  sweep->add_option("--format", ra.format, "csv | table")->default_str("csv");
  sweep->add_option("--seed", ra.seed, "Override the master seed");
  sweep->add_option("--replications", ra.replications, "Replications per point");
  sweep->add_option("--workers", ra.workers, "Parallel grid workers");

  auto* live = app.add_subcommand("live", "Run prompts through real backends");
  add_common(live);
  live->add_option("--prompts", ra.prompts, "NDJSON prompts file")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what());
  }

  try {
    if (stability->parsed()) return cmd_stability(st, out);
    if (simulate->parsed()) return cmd_simulate(ra, out);
    if (sweep->parsed()) {
      if (ra.format == "table" && !sweep->count("--format")) ra.format = "csv";
      return cmd_sweep(ra, out);
    }
    if (live->parsed()) return cmd_live(ra, out, err);
  } catch (const ConfigError& e) {
    return fail(err, "config", e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(err, "io", e.what());
  } catch (const BackendError& e) {
    return fail(err, "backend", e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
  return fail(err, "usage", "no subcommand");
}

}  // namespace dmoa
