#include "dmoa/report_io.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace dmoa {
namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json summary_json(const MetricSummary& s) {
  json j = {{"mean", number_or_null(s.mean)}};
  j["std_error"] = s.std_error ? number_or_null(*s.std_error) : json(nullptr);
  return j;
}

std::string csv_escape(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

constexpr std::string_view kRunColumns =
    "run,seed,mean_latency,latency_p50,latency_p95,avg_queue_size,"
    "growth_slope,queued_growth_slope,completed_jobs,generated_jobs,"
    "conservation_violations,verdict";

}  // namespace

std::optional<OutputFormat> parse_format(std::string_view s) {
  if (s == "table") return OutputFormat::Table;
  if (s == "csv") return OutputFormat::Csv;
  if (s == "records") return OutputFormat::Records;
  return std::nullopt;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("NA");
}

std::string config_label(const ProtocolParams& params) {
  return "M=" + std::to_string(params.layers) + ",k=" + std::to_string(params.k);
}

json to_json(const SimReport& r) {
  json nodes = json::array();
  for (const auto& n : r.per_node) {
    nodes.push_back({{"time_avg_queue_waiting", n.time_avg_queue_waiting},
                     {"time_avg_in_system", n.time_avg_in_system},
                     {"utilization_measured", n.utilization_measured},
                     {"input_rate", n.input_rate},
                     {"tasks_served", n.tasks_served}});
  }
  return {{"per_node", std::move(nodes)},
          {"avg_queue_size", r.avg_queue_size},
          {"mean_latency", number_or_null(r.mean_latency)},
          {"latency_p50", number_or_null(r.latency_p50)},
          {"latency_p95", number_or_null(r.latency_p95)},
          {"completed_jobs", r.completed_jobs},
          {"generated_jobs", r.generated_jobs},
          {"growth_slope", r.growth_slope},
          {"queued_growth_slope", r.queued_growth_slope},
          {"backlog_at_warmup", r.backlog_at_warmup},
          {"backlog_final", r.backlog_final},
          {"conservation_violations", r.conservation_violations},
          {"total_completed_jobs", r.total_completed_jobs},
          {"end_time", r.end_time},
          {"verdict", to_string(r.verdict)}};
}

json to_json(const RateSummary& s) {
  return {{"lambda", s.lambda},         {"alpha", s.alpha},
          {"r_prop_in", s.r_prop_in},   {"r_layer_in", s.r_layer_in},
          {"r_in", s.r_in},             {"r_out", s.r_out},
          {"utilization", s.utilization}, {"stable", s.stable}};
}

void write_simulation(std::ostream& out, const MoAConfig& config,
                      const ReplicatedReport& report, OutputFormat format) {
  const std::string label = config_label(config.params);
  switch (format) {
    case OutputFormat::Table: {
      out << std::left << std::setw(14) << "config" << std::right
          << std::setw(16) << "latency_s" << std::setw(16) << "avg_queue"
          << "  verdict\n";
      out << std::left << std::setw(14) << label << std::right << std::setw(16)
          << fixed(report.mean_latency.mean, 3) << std::setw(16)
          << fixed(report.avg_queue_size.mean, 4) << "  "
          << to_string(report.verdict) << '\n';
      break;
    }
    case OutputFormat::Csv: {
      out << kRunColumns << '\n';
      for (std::size_t i = 0; i < report.runs.size(); ++i) {
        const SimReport& r = report.runs[i];
        out << i << ',' << report.seeds[i] << ',' << format_double(r.mean_latency)
            << ',' << format_double(r.latency_p50) << ','
            << format_double(r.latency_p95) << ','
            << format_double(r.avg_queue_size) << ','
            << format_double(r.growth_slope) << ','
            << format_double(r.queued_growth_slope) << ',' << r.completed_jobs
            << ',' << r.generated_jobs << ',' << r.conservation_violations << ','
            << to_string(r.verdict) << '\n';
      }
      if (report.runs.size() > 1) {
        auto se = [](const MetricSummary& s) {
          return format_double(s.std_error.value_or(std::nan("")));
        };
        out << "mean,," << format_double(report.mean_latency.mean) << ','
            << format_double(report.latency_p50.mean) << ','
            << format_double(report.latency_p95.mean) << ','
            << format_double(report.avg_queue_size.mean) << ','
            << format_double(report.growth_slope.mean) << ",,,,,"
            << to_string(report.verdict) << '\n';
        out << "stderr,," << se(report.mean_latency) << ','
            << se(report.latency_p50) << ',' << se(report.latency_p95) << ','
            << se(report.avg_queue_size) << ',' << se(report.growth_slope)
            << ",,,,,\n";
      }
      break;
    }
    case OutputFormat::Records: {
      json runs = json::array();
      for (std::size_t i = 0; i < report.runs.size(); ++i) {
        json r = to_json(report.runs[i]);
        r["seed"] = report.seeds[i];
        runs.push_back(std::move(r));
      }
      json doc = {{"config", label},
                  {"n", config.params.n},
                  {"k", config.params.k},
                  {"M", config.params.layers},
                  {"lambda", config.lambda},
                  {"replications", report.runs.size()},
                  {"avg_queue_size", summary_json(report.avg_queue_size)},
                  {"mean_latency", summary_json(report.mean_latency)},
                  {"latency_p50", summary_json(report.latency_p50)},
                  {"latency_p95", summary_json(report.latency_p95)},
                  {"growth_slope", summary_json(report.growth_slope)},
                  {"time_avg_in_system", summary_json(report.time_avg_in_system)},
                  {"time_avg_queue_waiting", summary_json(report.time_avg_queue_waiting)},
                  {"utilization_measured", summary_json(report.utilization_measured)},
                  {"verdict", to_string(report.verdict)},
                  {"runs", std::move(runs)}};
      out << doc.dump(2) << '\n';
      break;
    }
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "M,k,utilization,stable_theory,mean_latency,avg_queue_size,verdict\n";
  for (const auto& row : rows) {
    out << row.point.layers << ',' << row.point.k << ',';
    if (!row.error.empty() && !row.result) {
      out << (row.utilization > 0.0 ? format_double(row.utilization) : "") << ','
          << (row.utilization > 0.0 ? (row.stable_theory ? "true" : "false") : "")
          << ",,," << csv_escape("error: " + row.error) << '\n';
      continue;
    }
    out << format_double(row.utilization) << ','
        << (row.stable_theory ? "true" : "false") << ','
        << format_double(row.result->mean_latency.mean) << ','
        << format_double(row.result->avg_queue_size.mean) << ','
        << to_string(row.result->verdict) << '\n';
  }
}

void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << std::left << std::setw(12) << "config" << std::right << std::setw(10)
      << "rho" << std::setw(8) << "theory" << std::setw(14) << "latency_s"
      << std::setw(12) << "avg_queue" << "  verdict\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(12)
        << ("M=" + std::to_string(row.point.layers) + ",k=" + std::to_string(row.point.k))
        << std::right;
    if (!row.result) {
      out << "  error: " << row.error << '\n';
      continue;
    }
    out << std::setw(10) << fixed(row.utilization, 3) << std::setw(8)
        << (row.stable_theory ? "stable" : "unstbl") << std::setw(14)
        << fixed(row.result->mean_latency.mean, 3) << std::setw(12)
        << fixed(row.result->avg_queue_size.mean, 4) << "  "
        << to_string(row.result->verdict) << '\n';
  }
}

}  // namespace dmoa
