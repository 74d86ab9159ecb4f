#pragma once

// Run configuration file: one JSON document describing the experiment, the
// per-node backends and the run mode.
//
//   {"n": 4, "k": 1, "M": 1, "lambda": 0.25, "alpha": 1, "horizon": 10000,
//    "seed": 7}
//
// is a complete simulate-mode config. Defaults: exponential service, Poisson
// arrivals, zero network delay, warmup = 10% of horizon, temperature 0.7,
// queue guard 10^6.

#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmoa/backend.hpp"
#include "dmoa/simulator.hpp"
#include "dmoa/sweep.hpp"

namespace dmoa {

enum class RunMode { Simulate, Live };

struct RunConfig {
  RunMode mode = RunMode::Simulate;
  MoAConfig sim;
  std::vector<BackendSpec> backends;  // index = node id; empty when not given
  std::size_t replications = 1;
  double temperature = kDefaultTemperature;
  std::vector<GridPoint> grid;
};

/// Throws ConfigError naming the offending field.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config_json(const nlohmann::json& doc);

/// Fully explicit form; parse_config_json(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

}  // namespace dmoa
