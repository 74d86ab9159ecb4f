#include <set>
#include <sstream>

#include "doctest.h"
#include "dmoa/errors.hpp"
#include "dmoa/live.hpp"
#include "fixture_server.hpp"

using namespace dmoa;

namespace {

std::vector<LiveNode> fixture_nodes(const fixture::Server& s, std::uint32_t n) {
  std::vector<LiveNode> nodes;
  for (std::uint32_t i = 0; i < n; ++i) {
    HttpBackendSpec spec;
    spec.base_url = s.base_url();
    spec.model = "model-" + std::to_string(i);
    spec.max_retries = 0;
    auto backend = std::make_shared<HttpBackend>(spec, i);
    nodes.push_back({backend, spec.model, 0.7, std::nullopt});
  }
  return nodes;
}

std::vector<LiveNode> mock_nodes(std::uint32_t n) {
  std::vector<LiveNode> nodes;
  for (std::uint32_t i = 0; i < n; ++i) {
    nodes.push_back({std::make_shared<MockBackend>(MockBackendSpec{}, i, 1), "mock", 0.7,
                     std::nullopt});
  }
  return nodes;
}

}  // namespace

TEST_CASE("M=0 is a passthrough to the origin's backend") {
  fixture::Server server;
  const auto recs = run_live({3, 0, 0}, fixture_nodes(server, 3), {{1, "What is 2+2?"}}, 5);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].ok);
  CHECK(recs[0].response == fixture::expected_reply("model-1", "What is 2+2?", false));
  REQUIRE(recs[0].stages.size() == 1);
  CHECK(recs[0].stages[0].node == 1);
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0]["messages"].size() == 1);
}

TEST_CASE("M=1, k=1 aggregates both proposals at the origin") {
  fixture::Server server;
  const auto recs = run_live({4, 1, 1}, fixture_nodes(server, 4), {{0, "What is 2+2?"}}, 9);
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].ok);
  REQUIRE(recs[0].stages.size() == 3);

  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 3);
  const auto& agg = reqs[2];
  CHECK(agg["model"] == "model-0");
  REQUIRE(agg["messages"].size() == 2);
  CHECK(agg["messages"][0]["content"] == std::string(kAggregatorSystemPrompt));
  const std::string user = agg["messages"][1]["content"];
  CHECK(user.starts_with("What is 2+2?\n\nResponse 1 (from node "));
  CHECK(count_response_blocks(user) == 2);
  // Self proposal and the neighbor's both appear with their producers.
  const auto& first = recs[0].stages[0];
  const auto& second = recs[0].stages[1];
  CHECK(std::set<NodeId>{first.node, second.node}.count(0) == 1);
  CHECK(user.find(fixture::expected_reply("model-" + std::to_string(first.node),
                                          "What is 2+2?", false)) != std::string::npos);
  CHECK(recs[0].response == fixture::expected_reply("model-0", user, true));
}

TEST_CASE("many prompts each make (k+1)M+1 calls") {
  fixture::Server server;
  const ProtocolParams p{4, 2, 2};
  std::vector<LivePrompt> prompts;
  for (int i = 0; i < 10; ++i) {
    prompts.push_back({static_cast<NodeId>(i % 4), "question " + std::to_string(i)});
  }
  const auto recs = run_live(p, fixture_nodes(server, 4), prompts, 3);
  REQUIRE(recs.size() == 10);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].ok);
    CHECK(recs[i].prompt == prompts[i].text);
    CHECK(recs[i].stages.size() == total_inferences(p));
    CHECK(recs[i].latency > 0.0);
    for (const auto& s : recs[i].stages) {
      CHECK(s.started_at >= s.enqueued_at);
      CHECK(s.finished_at >= s.started_at);
    }
    CHECK(recs[i].stages.back().kind == TaskKind::aggregation());
    CHECK(recs[i].stages.back().node == prompts[i].origin);
  }
  CHECK(server.requests().size() == 10 * total_inferences(p));
}

TEST_CASE("a failing backend fails only its job") {
  fixture::Server server;
  const auto recs = run_live({3, 1, 1}, fixture_nodes(server, 3),
                             {{0, "fine"}, {1, "please FAIL"}, {2, "also fine"}}, 1);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].ok);
  CHECK_FALSE(recs[1].ok);
  CHECK(recs[1].error.find("HTTP 500") != std::string::npos);
  CHECK(recs[2].ok);
  const auto j = to_json(recs[1]);
  CHECK(j["status"] == "failed");
  CHECK(j.contains("error"));
}

TEST_CASE("mock backends match the simulator's response text") {
  const auto recs = run_live({3, 0, 0}, mock_nodes(3), {{2, "hello"}}, 1);
  REQUIRE(recs[0].ok);
  CHECK(recs[0].response == mock_response_text(2, MessageBundle{std::nullopt, "hello"}));
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(run_live({3, 1, 1}, mock_nodes(2), {{0, "x"}}, 1), ConfigError);
  CHECK_THROWS_AS(run_live({3, 1, 1}, mock_nodes(3), {{3, "x"}}, 1), ConfigError);
  CHECK(run_live({3, 1, 1}, mock_nodes(3), {}, 1).empty());
}

TEST_CASE("prompt file parsing") {
  std::istringstream ok("{\"origin\": 0, \"prompt\": \"a\"}\n\n{\"origin\": 2, \"prompt\": \"b\"}\n");
  const auto ps = parse_prompts(ok, 3);
  REQUIRE(ps.size() == 2);
  CHECK(ps[1].origin == 2);
  CHECK(ps[1].text == "b");

  std::istringstream bad("{\"origin\": 0, \"prompt\": \"a\"}\n{\"origin\": 5, \"prompt\": \"b\"}\n");
  try {
    parse_prompts(bad, 3);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream junk("not json\n");
  CHECK_THROWS_AS(parse_prompts(junk, 3), ConfigError);
}
