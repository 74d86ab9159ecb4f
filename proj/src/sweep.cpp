#include "dmoa/sweep.hpp"

#include <bit>
#include <charconv>
#include <future>

#include "dmoa/errors.hpp"
#include "dmoa/queueing_model.hpp"

namespace dmoa {
namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  for (;;) {
    const auto at = s.find(sep);
    parts.push_back(s.substr(0, at));
    if (at == std::string_view::npos) return parts;
    s.remove_prefix(at + 1);
  }
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <typename T>
T parse_number(std::string_view s, const std::string& what) {
  s = trim(s);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("grid: " + what + ": cannot parse '" + std::string(s) + "'");
  }
  return value;
}

}  // namespace

std::vector<GridPoint> parse_grid(std::string_view text) {
  std::vector<GridPoint> grid;
  if (text.find_first_not_of(" ") == std::string_view::npos) return grid;
  for (auto entry : split(text, ',')) {
    const auto fields = split(entry, ':');
    if (fields.size() < 2 || fields.size() > 4) {
      throw ConfigError("grid: entry '" + std::string(entry) +
                        "' must be M:k[:lambda[:alpha]]");
    }
    GridPoint p;
    p.layers = parse_number<std::uint32_t>(fields[0], "M");
    p.k = parse_number<std::uint32_t>(fields[1], "k");
    if (fields.size() > 2) p.lambda = parse_number<double>(fields[2], "lambda");
    if (fields.size() > 3) p.alpha = parse_number<double>(fields[3], "alpha");
    grid.push_back(p);
  }
  return grid;
}

std::uint64_t point_seed(std::uint64_t master_seed, const GridPoint& point,
                         double lambda) {
  std::uint64_t s = mix_seed(master_seed, point.layers);
  s = mix_seed(s, point.k);
  return mix_seed(s, std::bit_cast<std::uint64_t>(lambda));
}

MoAConfig config_for_point(const MoAConfig& base, const GridPoint& point) {
  MoAConfig c = base;
  c.params.layers = point.layers;
  c.params.k = point.k;
  if (point.lambda) c.lambda = *point.lambda;
  if (point.alpha) {
    for (auto& s : c.service) s.mean = *point.alpha;
  }
  c.seed = point_seed(base.seed, point, c.lambda);
  return c;
}

std::vector<SweepRow> run_sweep(const MoAConfig& base,
                                const std::vector<GridPoint>& grid,
                                std::size_t replications, unsigned workers) {
  if (grid.empty()) throw ConfigError("grid: no points given");

  std::vector<SweepRow> rows(grid.size());
  auto run_point = [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.point = grid[i];
    try {
      const MoAConfig c = config_for_point(base, grid[i]);
      c.validate();
      std::vector<double> alphas;
      for (const auto& s : c.service) alphas.push_back(s.mean);
      const auto rates =
          is_stable_heterogeneous(c.lambda, c.params.k, c.params.layers, alphas);
      row.utilization = rates.utilization;
      row.stable_theory = rates.stable;
      row.result = replicate(c, replications);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run_point(i);
  } else {
    for (std::size_t base_i = 0; base_i < grid.size(); base_i += workers) {
      std::vector<std::future<void>> batch;
      for (std::size_t i = base_i; i < std::min(grid.size(), base_i + workers); ++i) {
        batch.push_back(std::async(std::launch::async, run_point, i));
      }
      for (auto& f : batch) f.get();
    }
  }
  return rows;
}

}  // namespace dmoa
