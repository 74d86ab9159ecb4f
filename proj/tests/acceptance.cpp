// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dmoa/protocol.hpp"
#include "dmoa/queueing_model.hpp"
#include "dmoa/report_io.hpp"
#include "dmoa/simulator.hpp"
#include "dmoa/sweep.hpp"
#include "dmoa/live.hpp"
#include "fixture_server.hpp"

using namespace dmoa;

namespace {

// Tolerances, pinned.
constexpr double kStableSlopeFraction = 0.05;   // 1(a), 7
constexpr double kOverloadSlopeRel = 0.20;      // 1(b), 7
constexpr double kInputRateRel = 0.03;          // 2
constexpr double kInSystemRel = 0.05;           // 4
constexpr double kWaitingRel = 0.07;            // 4
constexpr double kInclusionRel = 0.01;          // 6
constexpr double kChiSquare99Df5 = 15.08627246938899;  // scipy.stats.chi2.ppf(0.99, 5)

// Reference latencies (s) for (0,0), (1,1), (1,2), (2,2), (2,3); only their rank order is used.
constexpr double kReferenceLatency[] = {94.01, 329.92, 484.81, 790.01, 1074.28};

int failures = 0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void report(const std::string& id, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ": " << detail << std::endl;
  if (!pass) ++failures;
}

// Every simulation run here feeds the conservation tally.
std::uint64_t conservation_runs = 0;
std::uint64_t conservation_jobs = 0;
std::uint64_t conservation_violations = 0;

SimReport tracked(const MoAConfig& c, const RunOptions& o = {}) {
  SimReport r = run_simulation(c, o);
  ++conservation_runs;
  conservation_jobs += r.total_completed_jobs;
  conservation_violations += r.conservation_violations;
  return r;
}

ServiceSpec exponential(double mean) { return {ServiceDist::Exponential, mean, 1.0}; }

// --- Criteria 1 and 2 -------------------------------------------------------

SimReport c1_stable_run;
MoAConfig c1_stable_config;

void criterion_1_and_2() {
  const ProtocolParams p{10, 2, 2};
  const double star = 1.0 / 7.0;
  const double horizon = 2e5;

  MoAConfig hot = make_config(p, 1.2 * star, exponential(1.0), horizon, 101);
  // n (R_in - 1/alpha) at the overload point; R_in = 7 lambda.
  const double overload_rate = 10.0 * (7.0 * 1.2 * star - 1.0);

  c1_stable_config = make_config(p, 0.8 * star, exponential(1.0), horizon, 100);
  c1_stable_run = tracked(c1_stable_config);
  const auto& a = c1_stable_run;
  const bool a_ok = a.verdict == Verdict::StableLooking &&
                    std::abs(a.growth_slope) < kStableSlopeFraction * overload_rate;

  const SimReport b = tracked(hot);
  const bool b_ok = b.verdict == Verdict::Growing &&
                    std::abs(b.growth_slope - overload_rate) <= kOverloadSlopeRel * overload_rate;

  report("C1 stability boundary", a_ok && b_ok,
         "0.8x: verdict=" + std::string(to_string(a.verdict)) + " slope=" + fmt(a.growth_slope) +
             " (bound " + fmt(kStableSlopeFraction * overload_rate) + "); 1.2x: verdict=" +
             std::string(to_string(b.verdict)) + " slope=" + fmt(b.growth_slope) + " vs " +
             fmt(overload_rate) + " (rel err " +
             fmt(std::abs(b.growth_slope - overload_rate) / overload_rate) +
             "); queued-count slope " + fmt(b.queued_growth_slope));

  const double expected = 7.0 * 0.8 * star;
  double worst = 0.0;
  for (const auto& nr : a.per_node) {
    worst = std::max(worst, std::abs(nr.input_rate - expected) / expected);
  }
  report("C2 rate accounting", worst <= kInputRateRel,
         "expected per-node input " + fmt(expected) + ", worst rel err " + fmt(worst) +
             " over " + std::to_string(a.per_node.size()) + " nodes");
}

// --- Criterion 4 ------------------------------------------------------------

void criterion_4() {
  MoAConfig c = make_config({2, 0, 0}, 0.5, exponential(1.0), 2e5, 400);
  const std::size_t reps = 20;
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  const auto rep = replicate(c, reps, workers);
  for (const auto& r : rep.runs) {
    ++conservation_runs;
    conservation_jobs += r.total_completed_jobs;
    conservation_violations += r.conservation_violations;
  }
  const double l = rep.time_avg_in_system.mean;
  const double lq = rep.time_avg_queue_waiting.mean;
  const bool ok = std::abs(l - 1.0) <= kInSystemRel * 1.0 && std::abs(lq - 0.5) <= kWaitingRel * 0.5;
  report("C4 M/M/1 oracle", ok,
         "L=" + fmt(l) + " (target 1.0 +-5%), Lq=" + fmt(lq) + " (target 0.5 +-7%), " +
             std::to_string(reps) + " replications");
}

// --- Criterion 5 ------------------------------------------------------------

void criterion_5() {
  const double alpha = 1.25;
  bool ok = true;
  std::string detail;
  for (auto [m, k] : std::vector<std::pair<std::uint32_t, std::uint32_t>>{
           {0, 0}, {1, 1}, {2, 2}, {2, 3}}) {
    MoAConfig c = make_config({4, k, m}, 0.1, {ServiceDist::Deterministic, alpha, 1.0}, 100.0, 5);
    c.warmup = 0.0;
    c.generate_arrivals = false;
    c.injected = {{0.0, 1, "isolated prompt"}};
    const auto r = tracked(c);
    const double expected = (m + 1) * alpha;
    const bool exact = r.completed_jobs == 1 && r.mean_latency == expected;
    ok = ok && exact;
    detail += "(" + std::to_string(m) + "," + std::to_string(k) + ")=" + fmt(r.mean_latency) +
              (exact ? "" : "!=" + fmt(expected)) + " ";
  }
  report("C5 deterministic latency", ok, detail + "(alpha " + fmt(alpha) + ")");
}

// --- Criterion 6 ------------------------------------------------------------

void criterion_6() {
  const ProtocolParams p{5, 2, 1};
  Rng rng = Rng::substream(600, "neighbors", 0);
  const long draws = 1'000'000;
  std::vector<long> hits(5, 0);
  std::map<std::vector<NodeId>, long> subsets;
  for (long i = 0; i < draws; ++i) {
    const auto nb = select_neighbors(0, p, rng);
    for (NodeId x : nb) ++hits[x];
    ++subsets[nb];
  }
  double worst = 0.0;
  for (NodeId x = 1; x < 5; ++x) {
    worst = std::max(worst, std::abs(hits[x] / double(draws) - 0.5) / 0.5);
  }
  // C(4,2) = 6 subsets, uniform under the null.
  const double expected = draws / 6.0;
  double chi = 0.0;
  for (const auto& [_, c] : subsets) chi += (c - expected) * (c - expected) / expected;
  chi += expected * static_cast<double>(6 - subsets.size());
  const bool ok = hits[0] == 0 && worst <= kInclusionRel && subsets.size() == 6 &&
                  chi < kChiSquare99Df5;
  report("C6 neighbor uniformity", ok,
         "worst inclusion rel err " + fmt(worst) + ", chi2=" + fmt(chi) + " (critical " +
             fmt(kChiSquare99Df5) + ", df 5), self included " + std::to_string(hits[0]) + "x");
}

// --- Criterion 7 ------------------------------------------------------------

// Fluid backlog rate for the profile {0.5, 1, 2, 0.5}, k=1, M=1, lambda=0.2.
// Only node 2 (capacity 0.5) saturates. It receives layer-1 tasks at
// L = 2 lambda = 0.4; aggregation tasks for its own jobs appear as it serves
// its own layer-1 tasks, half of what it serves in layer 1. Under FCFS with a
// linearly growing queue the served mix equals the arrival mix, so
//   s1 = 0.5 L / (L + a),  a = s1 / 2  =>  a^2 + L a - 0.25 L = 0.
// Backlog slope = spawned inferences - all service:
//   3 n lambda - [0.5 + (layer-1 elsewhere) + (aggregations elsewhere)].
struct FluidHetero {
  double backlog_slope;
  double queued_slope;
};

FluidHetero fluid_hetero() {
  const double lambda = 0.2, n = 4, L = 2 * lambda, mu2 = 0.5;
  const double a = (-L + std::sqrt(L * L + 4 * 0.25 * L)) / 2;
  const double s1 = mu2 * L / (L + a);
  const double layer1_elsewhere = n * lambda * 2 - L;
  // Other origins' jobs: those whose neighbor is node 2 wait on node 2's service.
  const double via_node2 = 3 * lambda / 3;
  const double agg_elsewhere = (3 * lambda - via_node2) + s1 / 2;
  const double served = mu2 + layer1_elsewhere + agg_elsewhere;
  return {3 * n * lambda - served, L + a - mu2};
}

void criterion_7() {
  const std::vector<double> profile{0.5, 1.0, 2.0, 0.5};
  const ProtocolParams p{4, 1, 1};
  const double star = 1.0 / (2.0 * 3.0);
  auto config_at = [&](double factor, std::uint64_t seed) {
    MoAConfig c = make_config(p, factor * star, exponential(1.0), 2e5, seed);
    for (std::size_t i = 0; i < profile.size(); ++i) c.service[i].mean = profile[i];
    return c;
  };
  const MoAConfig lo = config_at(0.8, 700), hi = config_at(1.2, 701);
  const double literal_rate = theoretical_overload_rate(hi);  // n (R_in - 1/alpha_max) = 0.4
  const FluidHetero fluid = fluid_hetero();

  const bool theory_lo = is_stable_heterogeneous(lo.lambda, 1, 1, profile).stable;
  const bool theory_hi = is_stable_heterogeneous(hi.lambda, 1, 1, profile).stable;
  const SimReport a = tracked(lo), b = tracked(hi);

  const bool verdicts_match = theory_lo == (a.verdict == Verdict::StableLooking) &&
                              theory_hi == (b.verdict == Verdict::StableLooking) &&
                              theory_lo && !theory_hi;
  const double stable_bound = kStableSlopeFraction * std::min(literal_rate, fluid.backlog_slope);
  const bool lo_slope = std::abs(a.growth_slope) < stable_bound;
  const double rel_fluid = std::abs(b.growth_slope - fluid.backlog_slope) / fluid.backlog_slope;
  const bool hi_slope = rel_fluid <= kOverloadSlopeRel;

  report("C7 heterogeneous stability", verdicts_match && lo_slope && hi_slope,
         "0.8x: theory stable=" + std::string(theory_lo ? "true" : "false") + " sim=" +
             std::string(to_string(a.verdict)) + " slope=" + fmt(a.growth_slope) + " (bound " +
             fmt(stable_bound) + "); 1.2x: theory stable=" + (theory_hi ? "true" : "false") +
             " sim=" + std::string(to_string(b.verdict)) + " slope=" + fmt(b.growth_slope) +
             " vs fluid " + fmt(fluid.backlog_slope) + " (rel err " + fmt(rel_fluid) +
             "); queued slope " + fmt(b.queued_growth_slope) + " vs fluid " +
             fmt(fluid.queued_slope) + "; n(R_in-1/alpha_max)=" + fmt(literal_rate) +
             " (ratio " + fmt(b.growth_slope / literal_rate) + ", informational)");
}

// --- Criterion 8 ------------------------------------------------------------

void criterion_8() {
  const char* chain = "0:0,1:1,1:2,2:2,2:3";
  MoAConfig base = make_config({4, 0, 0}, 0.08, exponential(1.0), 1e5, 800);
  const auto rows = run_sweep(base, parse_grid(chain), 3,
                              std::max(1u, std::thread::hardware_concurrency()));
  bool ok = true;
  std::string detail;
  std::vector<double> lat, queue;
  for (const auto& row : rows) {
    if (!row.result || !row.stable_theory) {
      ok = false;
      detail += "[M=" + std::to_string(row.point.layers) + ",k=" + std::to_string(row.point.k) +
                " failed: " + row.error + "] ";
      continue;
    }
    for (const auto& r : row.result->runs) {
      ++conservation_runs;
      conservation_jobs += r.total_completed_jobs;
      conservation_violations += r.conservation_violations;
    }
    lat.push_back(row.result->mean_latency.mean);
    queue.push_back(row.result->avg_queue_size.mean);
    detail += config_label({4, row.point.k, row.point.layers}) + " lat=" + fmt(lat.back()) +
              " q=" + fmt(queue.back()) + "; ";
  }
  if (lat.size() == 5) {
    for (std::size_t i = 1; i < 5; ++i) {
      ok = ok && lat[i] >= lat[i - 1] && queue[i] >= queue[i - 1];
      // Rank order against the reference latencies.
      ok = ok && (kReferenceLatency[i] > kReferenceLatency[i - 1]) == (lat[i] > lat[i - 1]);
    }
  }
  report("C8 trend reproduction", ok, detail + "lambda=0.08, alpha=1, n=4");
}

// --- Criterion 9 ------------------------------------------------------------

void criterion_9() {
  MoAConfig c = make_config({5, 2, 2}, 0.04, {ServiceDist::Lognormal, 1.0, 0.6}, 5'000.0, 900);
  c.service[3].mean = 1.7;
  c.network_delay = {DelayDist::Exponential, 0.15};
  auto once = [&] {
    std::ostringstream trace, out;
    RunOptions o;
    o.trace = &trace;
    const SimReport r = tracked(c, o);
    const auto rep = aggregate_runs({r}, {c.seed});
    for (auto f : {OutputFormat::Table, OutputFormat::Csv, OutputFormat::Records}) {
      write_simulation(out, c, rep, f);
    }
    auto many = replicate(c, 4, 1);
    auto many_threaded = replicate(c, 4, 4);
    write_simulation(out, c, many, OutputFormat::Csv);
    std::ostringstream threaded;
    write_simulation(threaded, c, many_threaded, OutputFormat::Csv);
    return std::tuple{trace.str(), out.str(), threaded.str()};
  };
  const auto [t1, r1, th1] = once();
  const auto [t2, r2, th2] = once();
  const bool threaded_same = r1.substr(r1.size() - th1.size()) == th1;
  const bool ok = !t1.empty() && t1 == t2 && r1 == r2 && th1 == th2 && threaded_same;
  report("C9 determinism", ok,
         "trace " + std::to_string(t1.size()) + " bytes identical=" + (t1 == t2 ? "yes" : "no") +
             ", reports identical=" + (r1 == r2 ? "yes" : "no") +
             ", threaded replications identical=" + (threaded_same ? "yes" : "no"));
}

// --- Criterion 10 -----------------------------------------------------------

void criterion_10() {
  fixture::Server server;
  std::vector<LiveNode> nodes;
  for (NodeId i = 0; i < 2; ++i) {
    HttpBackendSpec spec;
    spec.base_url = server.base_url();
    spec.model = "fixture-" + std::to_string(i);
    spec.max_retries = 0;
    nodes.push_back({std::make_shared<HttpBackend>(spec, i), spec.model, 0.7, std::nullopt});
  }
  const auto recs = run_live({2, 1, 1}, nodes, {{0, "What is the capital of France?"}}, 1000);
  const auto reqs = server.requests();

  bool ok = recs.size() == 1 && recs[0].ok && reqs.size() == 3;
  std::string detail = "calls=" + std::to_string(reqs.size());
  if (reqs.size() == 3) {
    const auto& msgs = reqs[2]["messages"];
    const std::string verbatim =
        "You have been provided with a set of responses from various open-source models to "
        "the latest user query. Your task is to synthesize these responses into a single, "
        "high-quality response. It is crucial to critically evaluate the information provided "
        "in these responses, recognizing that some of it may be biased or incorrect. Your "
        "response should not simply replicate the given answers but should offer a refined, "
        "accurate, and comprehensive reply to the instruction. Ensure your response is "
        "well-structured, coherent, and adheres to the highest standards of accuracy and "
        "reliability. Do not add any additional comments about how you created these "
        "responses. Just synthesize these responses as instructed.";
    const bool sys = msgs.size() == 2 && msgs[0]["role"] == "system" &&
                     msgs[0]["content"] == verbatim;
    const std::string user = msgs.size() == 2 ? msgs[1]["content"].get<std::string>() : "";
    // Independent count of numbered blocks.
    const std::regex block(R"((^|\n)Response (\d+) \(from node \d+\):\n)");
    std::vector<int> numbers;
    for (auto it = std::sregex_iterator(user.begin(), user.end(), block);
         it != std::sregex_iterator(); ++it) {
      numbers.push_back(std::stoi((*it)[2]));
    }
    const bool blocks = numbers == std::vector<int>{1, 2};
    const bool first_two_plain = reqs[0]["messages"].size() == 1 && reqs[1]["messages"].size() == 1;
    ok = ok && sys && blocks && first_two_plain;
    detail += ", system prompt verbatim=" + std::string(sys ? "yes" : "no") +
              ", response blocks=" + std::to_string(numbers.size()) +
              ", proposals without system prompt=" + (first_two_plain ? "yes" : "no");
  }
  report("C10 live protocol fidelity", ok, detail);
}

// --- Criterion 3 (tallied over everything above plus randomized runs) --------

void criterion_3() {
  Rng meta(300);
  for (int i = 0; i < 40; ++i) {
    const auto n = static_cast<std::uint32_t>(2 + meta.uniform_below(7));
    const ProtocolParams p{n, static_cast<std::uint32_t>(meta.uniform_below(n)),
                           static_cast<std::uint32_t>(meta.uniform_below(4))};
    const double rho = 0.3 + 0.9 * meta.uniform01();  // includes overloaded runs
    const double lambda = rho / total_inferences(p);
    MoAConfig c = make_config(p, lambda, {ServiceDist::Lognormal, 1.0, 0.8}, 3'000.0,
                              meta.next_u64());
    c.network_delay = {DelayDist::Exponential, 0.3 * meta.uniform01()};
    tracked(c);
  }
  report("C3 conservation", conservation_violations == 0 && conservation_jobs > 0,
         std::to_string(conservation_violations) + " violations over " +
             std::to_string(conservation_jobs) + " completed jobs in " +
             std::to_string(conservation_runs) + " simulations");
}

}  // namespace

int main() {
  criterion_1_and_2();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_3();
  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
