#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmoa/simulator.hpp"

namespace dmoa {

struct GridPoint {
  std::uint32_t layers = 0;  // M
  std::uint32_t k = 0;
  std::optional<double> lambda;  // overrides the base config
  std::optional<double> alpha;   // overrides every node's mean service time
};

/// "M:k[:lambda[:alpha]]" entries separated by commas, e.g. "0:0,1:1,2:3".
/// Throws ConfigError.
std::vector<GridPoint> parse_grid(std::string_view text);

/// Seed for one grid point, derived from the point's coordinates only, so
/// adding, removing or reordering points never changes another point's run.
std::uint64_t point_seed(std::uint64_t master_seed, const GridPoint& point,
                         double lambda);

/// Base config with the point's M, k and overrides applied and its own seed.
MoAConfig config_for_point(const MoAConfig& base, const GridPoint& point);

struct SweepRow {
  GridPoint point;
  double utilization = 0.0;
  bool stable_theory = false;
  std::optional<ReplicatedReport> result;
  std::string error;  // set when the point failed; other rows are unaffected
};

/// One row per point, in grid order. Throws ConfigError for an empty grid.
std::vector<SweepRow> run_sweep(const MoAConfig& base,
                                const std::vector<GridPoint>& grid,
                                std::size_t replications, unsigned workers = 1);

}  // namespace dmoa
