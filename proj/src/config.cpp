#include "dmoa/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dmoa/errors.hpp"

namespace dmoa {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + key + ": unknown field");
  }
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + key + ": expected a number");
  return v.get<double>();
}

template <typename U>
U get_unsigned(const json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  const bool ok = v.is_number_unsigned() ||
                  (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!ok) {
    throw ConfigError(where + key + ": expected a nonnegative integer");
  }
  return v.get<U>();
}

std::string get_string(const json& obj, const std::string& key,
                       const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(where + key + ": expected a string");
  return v.get<std::string>();
}

ServiceSpec parse_service(const json& j, const std::string& where) {
  if (j.is_number()) {
    ServiceSpec s;
    s.mean = j.get<double>();
    return s;
  }
  if (!j.is_object()) throw ConfigError(where + ": expected an object or number");
  check_keys(j, where + ".", {"dist", "mean", "cv"});
  ServiceSpec s;
  if (j.contains("dist")) {
    const auto name = get_string(j, "dist", where + ".");
    const auto d = parse_service_dist(name);
    if (!d) throw ConfigError(where + ".dist: unknown distribution '" + name + "'");
    s.dist = *d;
  }
  if (!j.contains("mean")) throw ConfigError(where + ".mean: required");
  s.mean = get_number(j, "mean", where + ".");
  if (j.contains("cv")) s.cv = get_number(j, "cv", where + ".");
  return s;
}

DelaySpec parse_delay(const json& j) {
  if (!j.is_object()) throw ConfigError("network_delay: expected an object");
  check_keys(j, "network_delay.", {"dist", "mean"});
  DelaySpec d;
  if (j.contains("dist")) {
    const auto name = get_string(j, "dist", "network_delay.");
    const auto dist = parse_delay_dist(name);
    if (!dist) {
      throw ConfigError("network_delay.dist: unknown distribution '" + name + "'");
    }
    d.dist = *dist;
  }
  if (j.contains("mean")) d.mean = get_number(j, "mean", "network_delay.");
  return d;
}

BackendSpec parse_backend(const json& j, const std::string& where,
                          double default_temperature) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::string w = where + ".";
  BackendSpec b;
  b.temperature = default_temperature;
  const auto kind = j.contains("kind") ? get_string(j, "kind", w) : "mock";
  if (kind == "mock") {
    b.kind = BackendKind::Mock;
    check_keys(j, w, {"kind", "delay", "transform", "sleep", "temperature", "max_tokens"});
    if (j.contains("delay")) {
      b.mock.delay = parse_service(j["delay"], w + "delay");
      if (!j["delay"].is_object() || !j["delay"].contains("dist")) {
        b.mock.delay.dist = ServiceDist::Deterministic;
      }
    }
    if (j.contains("transform")) {
      const auto t = get_string(j, "transform", w);
      if (t == "digest") b.mock.transform = MockTransform::Digest;
      else if (t == "echo") b.mock.transform = MockTransform::Echo;
      else throw ConfigError(w + "transform: unknown mode '" + t + "'");
    }
    if (j.contains("sleep")) {
      if (!j["sleep"].is_boolean()) throw ConfigError(w + "sleep: expected a boolean");
      b.mock.sleep = j["sleep"].get<bool>();
    }
  } else if (kind == "http") {
    b.kind = BackendKind::Http;
    check_keys(j, w, {"kind", "base_url", "model", "timeout", "max_retries",
                      "backoff_base", "temperature", "max_tokens"});
    if (j.contains("base_url")) b.http.base_url = get_string(j, "base_url", w);
    if (!j.contains("model")) throw ConfigError(w + "model: required for http");
    b.http.model = get_string(j, "model", w);
    if (j.contains("timeout")) b.http.timeout = get_number(j, "timeout", w);
    if (j.contains("max_retries")) {
      b.http.max_retries = get_unsigned<int>(j, "max_retries", w);
    }
    if (j.contains("backoff_base")) b.http.backoff_base = get_number(j, "backoff_base", w);
  } else {
    throw ConfigError(w + "kind: unknown backend kind '" + kind + "'");
  }
  if (j.contains("temperature")) b.temperature = get_number(j, "temperature", w);
  if (j.contains("max_tokens")) b.max_tokens = get_unsigned<int>(j, "max_tokens", w);
  b.validate(where);
  return b;
}

json service_to_json(const ServiceSpec& s) {
  json j = {{"dist", to_string(s.dist)}, {"mean", s.mean}};
  if (s.dist == ServiceDist::Lognormal) j["cv"] = s.cv;
  return j;
}

json backend_to_json(const BackendSpec& b) {
  json j;
  if (b.kind == BackendKind::Mock) {
    j = {{"kind", "mock"},
         {"delay", service_to_json(b.mock.delay)},
         {"transform", b.mock.transform == MockTransform::Echo ? "echo" : "digest"},
         {"sleep", b.mock.sleep}};
  } else {
    j = {{"kind", "http"},
         {"base_url", b.http.base_url},
         {"model", b.http.model},
         {"timeout", b.http.timeout},
         {"max_retries", b.http.max_retries},
         {"backoff_base", b.http.backoff_base}};
  }
  j["temperature"] = b.temperature;
  if (b.max_tokens) j["max_tokens"] = *b.max_tokens;
  return j;
}

}  // namespace

RunConfig parse_config_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  check_keys(doc, "", {"mode", "n", "k", "M", "lambda", "arrival", "alpha",
                       "service", "service_dist", "network_delay", "horizon",
                       "warmup", "seed", "queue_guard", "replications",
                       "temperature", "nodes", "grid"});
  for (const auto* key : {"n", "k", "M", "lambda", "horizon"}) {
    if (!doc.contains(key)) throw ConfigError(std::string(key) + ": required");
  }

  RunConfig rc;
  if (doc.contains("mode")) {
    const auto mode = get_string(doc, "mode", "");
    if (mode == "simulate") rc.mode = RunMode::Simulate;
    else if (mode == "live") rc.mode = RunMode::Live;
    else throw ConfigError("mode: expected 'simulate' or 'live', got '" + mode + "'");
  }

  MoAConfig& c = rc.sim;
  c.params.n = get_unsigned<std::uint32_t>(doc, "n", "");
  c.params.k = get_unsigned<std::uint32_t>(doc, "k", "");
  c.params.layers = get_unsigned<std::uint32_t>(doc, "M", "");
  c.lambda = get_number(doc, "lambda", "");
  if (doc.contains("arrival")) {
    const auto name = get_string(doc, "arrival", "");
    const auto d = parse_arrival_dist(name);
    if (!d) throw ConfigError("arrival: unknown distribution '" + name + "'");
    c.arrival = *d;
  }

  if (doc.contains("alpha") == doc.contains("service")) {
    throw ConfigError("alpha: give exactly one of 'alpha' or 'service'");
  }
  ServiceDist default_dist = ServiceDist::Exponential;
  if (doc.contains("service_dist")) {
    const auto name = get_string(doc, "service_dist", "");
    const auto d = parse_service_dist(name);
    if (!d) throw ConfigError("service_dist: unknown distribution '" + name + "'");
    default_dist = *d;
  }
  if (doc.contains("alpha")) {
    const auto& a = doc["alpha"];
    if (a.is_number()) {
      c.service.assign(c.params.n, ServiceSpec{default_dist, a.get<double>(), 1.0});
    } else if (a.is_array()) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) {
          throw ConfigError("alpha[" + std::to_string(i) + "]: expected a number");
        }
        c.service.push_back(ServiceSpec{default_dist, a[i].get<double>(), 1.0});
      }
    } else {
      throw ConfigError("alpha: expected a number or a list of numbers");
    }
  } else {
    const auto& s = doc["service"];
    if (s.is_array()) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        c.service.push_back(parse_service(s[i], "service[" + std::to_string(i) + "]"));
      }
    } else {
      c.service.assign(c.params.n, parse_service(s, "service"));
    }
  }
  if (c.service.size() != c.params.n) {
    throw ConfigError("alpha: expected " + std::to_string(c.params.n) +
                      " per-node values, got " + std::to_string(c.service.size()));
  }

  if (doc.contains("network_delay")) c.network_delay = parse_delay(doc["network_delay"]);
  c.horizon = get_number(doc, "horizon", "");
  c.warmup = doc.contains("warmup") ? get_number(doc, "warmup", "") : 0.1 * c.horizon;
  if (doc.contains("seed")) c.seed = get_unsigned<std::uint64_t>(doc, "seed", "");
  if (doc.contains("queue_guard")) {
    if (doc["queue_guard"].is_null()) c.queue_guard.reset();
    else c.queue_guard = get_unsigned<std::size_t>(doc, "queue_guard", "");
  }
  if (doc.contains("replications")) {
    rc.replications = get_unsigned<std::size_t>(doc, "replications", "");
    if (rc.replications == 0) throw ConfigError("replications: must be >= 1");
  }
  if (doc.contains("temperature")) {
    rc.temperature = get_number(doc, "temperature", "");
    if (!(rc.temperature >= 0.0)) throw ConfigError("temperature: must be >= 0");
  }

  if (doc.contains("nodes")) {
    const auto& nodes = doc["nodes"];
    if (!nodes.is_array()) throw ConfigError("nodes: expected a list");
    if (nodes.size() != c.params.n) {
      throw ConfigError("nodes: expected " + std::to_string(c.params.n) +
                        " entries, got " + std::to_string(nodes.size()));
    }
    rc.backends.resize(c.params.n);
    std::set<std::uint32_t> seen;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string w = "nodes[" + std::to_string(i) + "]";
      if (!nodes[i].is_object()) throw ConfigError(w + ": expected an object");
      check_keys(nodes[i], w + ".", {"id", "backend"});
      if (!nodes[i].contains("id")) throw ConfigError(w + ".id: required");
      const auto id = get_unsigned<std::uint32_t>(nodes[i], "id", w + ".");
      if (id >= c.params.n) throw ConfigError(w + ".id: outside [0, n)");
      if (!seen.insert(id).second) {
        throw ConfigError(w + ".id: duplicate node id " + std::to_string(id));
      }
      if (!nodes[i].contains("backend")) throw ConfigError(w + ".backend: required");
      rc.backends[id] = parse_backend(nodes[i]["backend"], w + ".backend", rc.temperature);
    }
  }
  if (rc.mode == RunMode::Live && rc.backends.empty()) {
    throw ConfigError("nodes: live mode needs a backend for every node");
  }

  if (doc.contains("grid")) {
    const auto& g = doc["grid"];
    if (!g.is_array()) throw ConfigError("grid: expected a list");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string w = "grid[" + std::to_string(i) + "].";
      if (!g[i].is_object()) throw ConfigError(w + ": expected an object");
      check_keys(g[i], w, {"M", "k", "lambda", "alpha"});
      if (!g[i].contains("M") || !g[i].contains("k")) {
        throw ConfigError(w + "M: both M and k are required");
      }
      GridPoint p;
      p.layers = get_unsigned<std::uint32_t>(g[i], "M", w);
      p.k = get_unsigned<std::uint32_t>(g[i], "k", w);
      if (g[i].contains("lambda")) p.lambda = get_number(g[i], "lambda", w);
      if (g[i].contains("alpha")) p.alpha = get_number(g[i], "alpha", w);
      rc.grid.push_back(p);
    }
  }

  c.validate();
  return rc;
}

RunConfig parse_config_text(std::string_view text) {
  const auto doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config: syntax error, not valid JSON");
  return parse_config_json(doc);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json to_json(const RunConfig& rc) {
  const MoAConfig& c = rc.sim;
  json service = json::array();
  for (const auto& s : c.service) service.push_back(service_to_json(s));
  json j = {{"mode", rc.mode == RunMode::Live ? "live" : "simulate"},
            {"n", c.params.n},
            {"k", c.params.k},
            {"M", c.params.layers},
            {"lambda", c.lambda},
            {"arrival", to_string(c.arrival)},
            {"service", std::move(service)},
            {"network_delay",
             {{"dist", to_string(c.network_delay.dist)}, {"mean", c.network_delay.mean}}},
            {"horizon", c.horizon},
            {"warmup", c.warmup},
            {"seed", c.seed},
            {"queue_guard", c.queue_guard ? json(*c.queue_guard) : json(nullptr)},
            {"replications", rc.replications},
            {"temperature", rc.temperature}};
  if (!rc.backends.empty()) {
    json nodes = json::array();
    for (std::size_t i = 0; i < rc.backends.size(); ++i) {
      nodes.push_back({{"id", i}, {"backend", backend_to_json(rc.backends[i])}});
    }
    j["nodes"] = std::move(nodes);
  }
  if (!rc.grid.empty()) {
    json grid = json::array();
    for (const auto& p : rc.grid) {
      json e = {{"M", p.layers}, {"k", p.k}};
      if (p.lambda) e["lambda"] = *p.lambda;
      if (p.alpha) e["alpha"] = *p.alpha;
      grid.push_back(std::move(e));
    }
    j["grid"] = std::move(grid);
  }
  return j;
}

}  // namespace dmoa
