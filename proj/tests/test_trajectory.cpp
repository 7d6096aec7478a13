// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "pipeline.hpp"
#include "trajsig/trajectory.hpp"

using namespace trajsig;
using trajsig::testing::read_file;

namespace {

const std::string kData = TRAJSIG_TEST_DATA;

Trajectory canonical(const std::string& doc) { return parse_trajectory(doc, TraceFormat::CanonicalV1); }

// Random but structurally valid trajectories for the property checks.
Trajectory random_trajectory(std::mt19937_64& rng, int n) {
  static const char* kTexts[] = {"hi", "", "Ça marche, merci", "order #W123 please", "日本語のテキスト", "  spaced  ",
                                 "emoji 🚀 ok", "line\nbreak"};
  static const char* kTools[] = {"get_order", "cancel", "search"};
  auto pick = [&](std::size_t k) { return static_cast<std::size_t>(rng() % k); };
  Trajectory t;
  t.id = "gen-" + std::to_string(n);
  t.domain = pick(2) ? "airline" : "retail";
  if (pick(3)) t.reward = static_cast<long long>(pick(2));
  if (pick(2)) t.meta["task_id"] = std::to_string(pick(100));
  std::vector<std::string> open;  // call ids awaiting an observation
  int calls = 0;
  const auto len = pick(12);
  for (std::size_t i = 0; i < len; ++i) {
    Message m;
    m.index = t.messages.size();
    const auto kind = pick(3);
    if (kind == 2 && !open.empty()) {
      m.role = Role::Tool;
      const auto k = pick(open.size());
      static const ObservationStatus kStatus[] = {ObservationStatus::Ok, ObservationStatus::Error,
                                                  ObservationStatus::Unknown};
      m.observation = ToolObservation{open[k], kStatus[pick(3)], kTexts[pick(std::size(kTexts))]};
      open.erase(open.begin() + static_cast<long>(k));
    } else if (kind == 1) {
      m.role = Role::Assistant;
      m.text = kTexts[pick(std::size(kTexts))];
      for (std::size_t c = pick(3); c > 0; --c) {
        ToolInvocation inv;
        inv.call_id = "c" + std::to_string(calls++);
        inv.tool_name = kTools[pick(3)];
        inv.arguments = OrderedJson::object();
        inv.arguments["z"] = static_cast<int>(pick(5));
        inv.arguments["a"] = OrderedJson::array({1, "two", nullptr});
        if (pick(2)) inv.arguments["nested"] = {{"k", kTexts[pick(std::size(kTexts))]}};
        open.push_back(inv.call_id);
        m.tool_calls.push_back(std::move(inv));
      }
    } else {
      m.role = Role::User;
      m.text = kTexts[pick(std::size(kTexts))];
      if (m.text.empty()) m.text = "ok";
    }
    t.messages.push_back(std::move(m));
  }
  return t;
}

}  // namespace

TEST_CASE("minimal canonical document") {
  const auto t = canonical(R"({"id":"t1","messages":[{"index":0,"role":"user","text":"hi"}]})");
  CHECK(t.id == "t1");
  REQUIRE(t.messages.size() == 1);
  CHECK(t.messages[0].role == Role::User);
  CHECK(t.messages[0].text == "hi");
  CHECK_FALSE(t.reward.has_value());
}

TEST_CASE("observation with unknown call id is a schema violation") {
  const std::string doc = R"({"id":"t","messages":[
    {"index":0,"role":"assistant","text":"","tool_calls":[{"call_id":"a","tool_name":"x","arguments":{}}]},
    {"index":1,"role":"tool","observation":{"call_id":"b","status":"ok","payload":"{}"}}]})";
  try {
    canonical(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::SchemaViolation);
    CHECK(e.message_index() == std::optional<std::size_t>(1));
  }
}

TEST_CASE("malformed input carries a byte offset") {
  try {
    canonical(R"({"id": "t", "messages": [ )");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::MalformedInput);
    CHECK(e.byte_offset().has_value());
  }
}

TEST_CASE("unknown roles are rejected") {
  CHECK_THROWS_AS(canonical(R"({"id":"t","messages":[{"index":0,"role":"narrator","text":"x"}]})"), ParseError);
}

TEST_CASE("structural violations") {
  // tool_calls on a user message
  CHECK_THROWS_AS(
      canonical(R"({"id":"t","messages":[{"index":0,"role":"user","text":"x","tool_calls":[{"call_id":"a","tool_name":"f"}]}]})"),
      ParseError);
  // tool message without observation
  CHECK_THROWS_AS(canonical(R"({"id":"t","messages":[{"index":0,"role":"tool","text":"x"}]})"), ParseError);
  // non-contiguous indices
  CHECK_THROWS_AS(canonical(R"({"id":"t","messages":[{"index":1,"role":"user","text":"x"}]})"), ParseError);
  // duplicate call ids
  CHECK_THROWS_AS(canonical(R"({"id":"t","messages":[
    {"index":0,"role":"assistant","text":"","tool_calls":[{"call_id":"a","tool_name":"f"},{"call_id":"a","tool_name":"g"}]}]})"),
                  ParseError);
  // observation before any invocation
  CHECK_THROWS_AS(canonical(R"({"id":"t","messages":[{"index":0,"role":"tool","observation":{"status":"ok","payload":""}}]})"),
                  ParseError);
}

TEST_CASE("tau-bench retail fixture") {
  // Counts taken from the fixture with a separate script: 14 source messages,
  // one of them the system prompt, 3 user turns, 4 tool calls, reward 0.0.
  const auto t = parse_trajectory(read_file(kData + "/tau_bench/retail_cancel.json"), TraceFormat::TauBenchV1);
  REQUIRE(t.reward.has_value());
  CHECK(*t.reward == 0);
  CHECK(t.messages.size() == 13);
  CHECK(t.meta.at("dropped_system_messages") == "1");
  CHECK(user_message_count(t) == 3);
  CHECK(invocation_stream(t).size() == 4);
  CHECK(t.messages.back().text == "forget it, let me talk to a human");
  CHECK(check_invariants(t).empty());

  const auto ok = parse_trajectory(read_file(kData + "/tau_bench/retail_exchange.json"), TraceFormat::TauBenchV1);
  CHECK(*ok.reward == 1);
  CHECK(ok.messages.size() == 5);
  CHECK(user_message_count(ok) == 2);
}

TEST_CASE("tau-bench results array splits into trajectories") {
  const auto one = read_file(kData + "/tau_bench/retail_exchange.json");
  const auto two = read_file(kData + "/tau_bench/airline_outage.json");
  const auto pool = parse_tau_bench_file("[" + one + "," + two + "]", "run", "retail");
  REQUIRE(pool.size() == 2);
  CHECK(pool[0].id != pool[1].id);
  CHECK(validate_pool(pool).empty());
}

TEST_CASE("user_message_count") {
  Trajectory empty;
  CHECK(user_message_count(empty) == 0);

  Trajectory t;
  for (int i = 0; i < 19; ++i) {
    Message m;
    m.index = static_cast<std::size_t>(i);
    m.role = i % 2 == 0 ? Role::User : Role::Assistant;
    m.text = "turn";
    t.messages.push_back(m);
  }
  CHECK(user_message_count(t) == 10);
}

TEST_CASE("invocation_stream links interleaved observations in call order") {
  const auto t = canonical(R"({"id":"t","messages":[
    {"index":0,"role":"user","text":"do both"},
    {"index":1,"role":"assistant","text":"","tool_calls":[
      {"call_id":"A","tool_name":"alpha","arguments":{}},{"call_id":"B","tool_name":"beta","arguments":{}}]},
    {"index":2,"role":"tool","observation":{"call_id":"B","status":"ok","payload":"b"}},
    {"index":3,"role":"tool","observation":{"call_id":"A","status":"ok","payload":"a"}}]})");
  const auto s = invocation_stream(t);
  REQUIRE(s.size() == 2);
  CHECK(s[0].invocation->call_id == "A");
  CHECK(s[0].observation->payload == "a");
  CHECK(s[0].observation_index == 3);
  CHECK(s[1].invocation->call_id == "B");
  CHECK(s[1].observation->payload == "b");
  CHECK(s[1].observation_index == 2);

  CHECK(invocation_stream(canonical(R"({"id":"t","messages":[{"index":0,"role":"user","text":"x"}]})")).empty());
}

TEST_CASE("observations without call ids link to the nearest open call of the same tool") {
  const std::string doc = R"({"task_id":1,"reward":1,"traj":[
    {"role":"user","content":"go"},
    {"role":"assistant","content":null,"tool_calls":[
      {"type":"function","function":{"name":"alpha","arguments":"{}"}},
      {"type":"function","function":{"name":"beta","arguments":"{}"}}]},
    {"role":"tool","name":"beta","content":"b"},
    {"role":"tool","name":"alpha","content":"a"}]})";
  const auto t = parse_trajectory(doc, TraceFormat::TauBenchV1);
  const auto s = invocation_stream(t);
  REQUIRE(s.size() == 2);
  CHECK(s[0].invocation->tool_name == "alpha");
  CHECK(s[0].observation->payload == "a");
  CHECK(s[1].observation->payload == "b");
  CHECK(s[0].observation->status == ObservationStatus::Unknown);
}

TEST_CASE("validate_pool") {
  auto t = canonical(R"({"id":"dup","reward":1,"messages":[{"index":0,"role":"user","text":"x"}]})");
  CHECK(validate_pool({t}).empty());

  const auto dup = validate_pool({t, t});
  REQUIRE(dup.size() == 1);
  CHECK(dup[0].kind == PoolViolation::Kind::DuplicateId);

  auto bad = t;
  bad.id = "two";
  bad.reward = 2;
  const auto range = validate_pool({t, bad});
  REQUIRE(range.size() == 1);
  CHECK(range[0].kind == PoolViolation::Kind::RewardOutOfRange);

  auto missing = t;
  missing.id = "none";
  missing.reward.reset();
  CHECK(validate_pool({missing}).at(0).kind == PoolViolation::Kind::MissingReward);
}

TEST_CASE("canonical arguments collapse key order and integral floats") {
  const auto a = OrderedJson::parse(R"({"b":2.0,"a":{"y":1,"x":[1.0,2.5]}})");
  const auto b = OrderedJson::parse(R"({"a":{"x":[1,2.5],"y":1},"b":2})");
  CHECK(canonical_arguments(a) == canonical_arguments(b));
  CHECK(canonical_arguments_string(a) == R"({"a":{"x":[1,2.5],"y":1},"b":2})");
}

TEST_CASE("property: canonical round trip, determinism and role counts") {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 500; ++n) {
    const auto t = random_trajectory(rng, n);
    REQUIRE(check_invariants(t).empty());
    const auto line = to_canonical_line(t);
    const auto back = canonical(line);
    CHECK(back == t);
    CHECK(canonical(line) == back);
    CHECK(to_canonical_line(back) == line);

    std::size_t calls = 0, assistants = 0, tools = 0;
    for (const auto& m : t.messages) {
      calls += m.tool_calls.size();
      assistants += m.role == Role::Assistant;
      tools += m.role == Role::Tool;
    }
    CHECK(invocation_stream(t).size() == calls);
    CHECK(user_message_count(t) + assistants + tools == t.messages.size());
  }
}
