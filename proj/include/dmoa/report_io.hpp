#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmoa/queueing_model.hpp"
#include "dmoa/simulator.hpp"
#include "dmoa/sweep.hpp"

namespace dmoa {

enum class OutputFormat { Table, Csv, Records };

std::optional<OutputFormat> parse_format(std::string_view s);

/// Shortest round-trip decimal form; "NA" for NaN.
std::string format_double(double v);

/// "M=<layers>,k=<k>"
std::string config_label(const ProtocolParams& params);

nlohmann::json to_json(const SimReport& report);
nlohmann::json to_json(const RateSummary& rates);

/// Table: label, mean latency, avg queue size, verdict.
/// Csv: one row per replication, plus mean and stderr rows when there are several.
/// Records: one JSON document with the aggregate and every run.
void write_simulation(std::ostream& out, const MoAConfig& config,
                      const ReplicatedReport& report, OutputFormat format);

/// Header: M,k,utilization,stable_theory,mean_latency,avg_queue_size,verdict.
/// A failed point keeps M, k and theory columns, leaves the measured columns
/// empty and puts "error: <cause>" in the verdict column.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace dmoa
