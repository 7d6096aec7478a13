// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "builders.hpp"
#include "oracles.hpp"
#include "trajsig/execution.hpp"
#include "trajsig/triage.hpp"

using namespace trajsig;
using trajsig::testing::TrajectoryBuilder;

namespace {

ExecutionConfig config() { return load_detector_config(default_lexicon_dir()).execution; }

std::string key(const LoopRun& r) {
  return std::string(r.subkind) + "|" + std::to_string(r.first) + "|" + std::to_string(r.last) + "|" +
         std::to_string(r.period) + "|" + r.varying_key;
}

std::vector<std::string> keys(const std::vector<LoopRun>& runs) {
  std::vector<std::string> out;
  for (const auto& r : runs) out.push_back(key(r));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("failure outcomes") {
  const auto err = TrajectoryBuilder()
                       .user("cancel it")
                       .call("cancel_order", {{"order_id", "W1"}}, ObservationStatus::Error, "invalid order id")
                       .build();
  const auto v = detect_failures(err, config());
  REQUIRE(v.size() == 1);
  CHECK(v[0].category == Category::Failure);
  CHECK(v[0].subkind == subkind::kErrorStatus);
  CHECK(v[0].span == std::vector<std::size_t>{1, 2});
  CHECK(v[0].evidence.find("cancel_order") != std::string::npos);
  CHECK(v[0].evidence.find("W1") != std::string::npos);

  const auto empty = TrajectoryBuilder().call("search", {{"q", "x"}}, ObservationStatus::Ok, "[]").build();
  const auto e = detect_failures(empty, config());
  REQUIRE(e.size() == 1);
  CHECK(e[0].subkind == subkind::kEmptyResult);

  const auto fine =
      TrajectoryBuilder().call("get_order", {{"id", 5}}, ObservationStatus::Ok, R"({"id":5,"status":"shipped"})").build();
  CHECK(detect_failures(fine, config()).empty());

  const auto not_found =
      TrajectoryBuilder().call("get_user", {{"id", 5}}, ObservationStatus::Ok, "User not found").build();
  CHECK(detect_failures(not_found, config()).at(0).subkind == subkind::kEmptyResult);

  const auto unknown =
      TrajectoryBuilder().call("get_user", {{"id", 5}}, ObservationStatus::Unknown, "Error: no such user").build();
  CHECK(detect_failures(unknown, config()).at(0).subkind == subkind::kErrorPayload);
}

TEST_CASE("empty-result literals") {
  const auto cfg = config();
  for (const char* p : {"", "  ", "[]", "{}", "null", "None", "\"\"", "''", " [] "})
    CHECK_MESSAGE(is_empty_result(p, cfg.empty_result_markers), p);
  for (const char* p : {"[1]", R"({"a":1})", "0", "false", "no issues"})
    CHECK_FALSE_MESSAGE(is_empty_result(p, cfg.empty_result_markers), p);
}

TEST_CASE("loop examples") {
  const auto retry = TrajectoryBuilder()
                         .call("get_order", {{"id", 5}})
                         .call("get_order", {{"id", 5}})
                         .call("get_order", {{"id", 5}})
                         .build();
  auto v = detect_loops(retry, config());
  REQUIRE(v.size() == 1);
  CHECK(v[0].subkind == subkind::kIdenticalRetry);
  CHECK(v[0].span == std::vector<std::size_t>{0, 2, 4});

  const auto drift = TrajectoryBuilder()
                         .call("search", {{"page", 1}})
                         .call("search", {{"page", 2}})
                         .call("search", {{"page", 3}})
                         .build();
  v = detect_loops(drift, config());
  REQUIRE(v.size() == 1);
  CHECK(v[0].subkind == subkind::kParameterDrift);
  CHECK(v[0].evidence.find("page") != std::string::npos);

  TrajectoryBuilder cyc;
  for (int i = 0; i < 3; ++i) cyc.call("A", {{"n", i}}).call("B", {{"m", i * 10}});
  v = detect_loops(cyc.build(), config());
  REQUIRE(v.size() == 1);
  CHECK(v[0].subkind == subkind::kMultiToolCycle);
  CHECK(v[0].span.size() == 6);

  // Same six-call stream checked against the window oracle.
  std::vector<CallView> calls;
  for (int i = 0; i < 3; ++i) {
    calls.push_back({"A", nlohmann::json{{"n", i}}, 0});
    calls.push_back({"B", nlohmann::json{{"m", i * 10}}, 0});
  }
  const auto runs = find_loop_runs(calls, config());
  CHECK(keys(runs) == keys(oracle::loop_runs(calls, config())));
  REQUIRE(runs.size() == 1);
  CHECK(runs[0].period == 2);
  CHECK(runs[0].last - runs[0].first + 1 == 6);
}

TEST_CASE("drift needs one and the same varying key") {
  const auto two_keys = TrajectoryBuilder()
                            .call("search", {{"page", 1}, {"q", "a"}})
                            .call("search", {{"page", 2}, {"q", "b"}})
                            .call("search", {{"page", 3}, {"q", "c"}})
                            .build();
  CHECK(detect_loops(two_keys, config()).empty());
  const auto switching = TrajectoryBuilder()
                             .call("search", {{"page", 1}, {"q", "a"}})
                             .call("search", {{"page", 2}, {"q", "a"}})
                             .call("search", {{"page", 2}, {"q", "b"}})
                             .build();
  CHECK(detect_loops(switching, config()).empty());
}

TEST_CASE("overlapping subkinds each emit") {
  // Four identical calls then a drift step: retry over 0..3, drift over 3..5.
  std::vector<CallView> calls;
  for (int i = 0; i < 4; ++i) calls.push_back({"s", nlohmann::json{{"p", 1}}, 0});
  calls.push_back({"s", nlohmann::json{{"p", 2}}, 0});
  calls.push_back({"s", nlohmann::json{{"p", 3}}, 0});
  const auto runs = find_loop_runs(calls, config());
  CHECK(keys(runs) == keys(oracle::loop_runs(calls, config())));
  CHECK(std::count_if(runs.begin(), runs.end(), [](auto& r) { return r.subkind == subkind::kIdenticalRetry; }) == 1);
  CHECK(std::count_if(runs.begin(), runs.end(), [](auto& r) { return r.subkind == subkind::kParameterDrift; }) == 1);
}

TEST_CASE("argument key order does not matter") {
  const auto a = TrajectoryBuilder()
                     .call("f", OrderedJson::parse(R"({"x":1,"y":2})"))
                     .call("f", OrderedJson::parse(R"({"y":2,"x":1})"))
                     .call("f", OrderedJson::parse(R"({"x":1.0,"y":2})"))
                     .build();
  const auto v = detect_loops(a, config());
  REQUIRE(v.size() == 1);
  CHECK(v[0].subkind == subkind::kIdenticalRetry);
}

TEST_CASE("config validation") {
  ExecutionConfig c;
  CHECK_NOTHROW(c.validate());
  c.identical_retry_min = 1;
  CHECK_THROWS(c.validate());
  c = {};
  c.drift_min_run = 2;
  CHECK_THROWS(c.validate());
  c = {};
  c.cycle_repeats_min = 1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("property: loop runs match the window oracle on random longer streams") {
  std::mt19937_64 rng(17);
  const char* tools[] = {"A", "B", "C"};
  for (int i = 0; i < 3000; ++i) {
    std::vector<CallView> calls;
    const auto n = rng() % 14;
    for (std::size_t k = 0; k < n; ++k)
      calls.push_back({tools[rng() % 3], nlohmann::json{{"v", rng() % 3}, {"w", rng() % 2}}, k});
    auto cfg = config();
    cfg.identical_retry_min = 2 + rng() % 3;
    cfg.cycle_period_max = 2 + rng() % 3;
    CHECK(keys(find_loop_runs(calls, cfg)) == keys(oracle::loop_runs(calls, cfg)));

    // Maximality of identical retries.
    std::vector<LoopRun> retries;
    for (const auto& r : find_loop_runs(calls, cfg))
      if (r.subkind == subkind::kIdenticalRetry) retries.push_back(r);
    for (const auto& a : retries)
      for (const auto& b : retries)
        if (&a != &b) CHECK_FALSE((b.first <= a.first && a.last <= b.last));
  }
}
