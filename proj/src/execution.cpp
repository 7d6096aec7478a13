// SPDX-License-Identifier: Apache-2.0
#include "trajsig/execution.hpp"

#include <optional>
#include <stdexcept>

namespace trajsig {

namespace {

constexpr std::string_view kEmptyLiterals[] = {"", "[]", "{}", "null", "None", "\"\"", "''"};

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string argument_digest(const ToolInvocation& inv) {
  return excerpt(canonical_arguments_string(inv.arguments), 80);
}

// The single key whose value differs between two argument objects, if the
// objects share a key set and differ in exactly one key.
std::optional<std::string> single_varying_key(const nlohmann::json& a, const nlohmann::json& b) {
  if (!a.is_object() || !b.is_object() || a.size() != b.size()) return std::nullopt;
  std::optional<std::string> varying;
  for (const auto& [key, value] : a.items()) {
    auto other = b.find(key);
    if (other == b.end()) return std::nullopt;
    if (*other == value) continue;
    if (varying) return std::nullopt;
    varying = key;
  }
  return varying;
}

bool is_primitive_block(const std::vector<CallView>& calls, std::size_t start, std::size_t period) {
  for (std::size_t d = 1; d < period; ++d) {
    if (period % d != 0) continue;
    bool repeats = true;
    for (std::size_t i = 0; i + d < period && repeats; ++i)
      repeats = calls[start + i].tool_name == calls[start + i + d].tool_name;
    if (repeats) return false;
  }
  return true;
}

}  // namespace

void ExecutionConfig::validate() const {
  if (identical_retry_min < 2) throw std::invalid_argument("identical_retry_min must be >= 2");
  if (drift_min_run < 3) throw std::invalid_argument("drift_min_run must be >= 3");
  if (cycle_period_max < 2) throw std::invalid_argument("cycle_period_max must be >= 2");
  if (cycle_repeats_min < 2) throw std::invalid_argument("cycle_repeats_min must be >= 2");
}

bool is_empty_result(std::string_view payload, const Lexicon& markers) {
  const auto t = trimmed(payload);
  for (auto literal : kEmptyLiterals)
    if (t == literal) return true;
  const auto norm = normalize(payload);
  if (norm.empty()) return true;
  return !fuzzy_find(norm, markers).empty();
}

std::vector<FailureOutcome> failure_outcomes(const Trajectory& t, const ExecutionConfig& cfg) {
  std::vector<FailureOutcome> out;
  for (const auto& ref : invocation_stream(t)) {
    if (ref.observation == nullptr) continue;
    const auto& obs = *ref.observation;
    if (obs.status == ObservationStatus::Error) {
      out.push_back({ref, subkind::kErrorStatus});
      continue;
    }
    if (obs.status == ObservationStatus::Unknown) {
      const auto toks = tokens(normalize(obs.payload));
      if (!toks.empty() && toks.front() == "error") {
        out.push_back({ref, subkind::kErrorPayload});
        continue;
      }
    }
    if (is_empty_result(obs.payload, cfg.empty_result_markers))
      out.push_back({ref, subkind::kEmptyResult});
  }
  return out;
}

SignalInstance failure_instance(const FailureOutcome& outcome) {
  const auto& inv = *outcome.ref.invocation;
  const auto& obs = *outcome.ref.observation;
  const std::string evidence = inv.tool_name + "(" + argument_digest(inv) + ") -> [" +
                               std::string(to_string(obs.status)) + "] " + excerpt(obs.payload, 100);
  return make_instance(Category::Failure, outcome.subkind,
                       {outcome.ref.message_index, outcome.ref.observation_index}, evidence,
                       "execution.failure");
}

std::vector<SignalInstance> detect_failures(const Trajectory& t, const ExecutionConfig& cfg) {
  std::vector<SignalInstance> out;
  for (const auto& outcome : failure_outcomes(t, cfg)) out.push_back(failure_instance(outcome));
  return out;
}

std::vector<LoopRun> find_loop_runs(const std::vector<CallView>& calls, const ExecutionConfig& cfg) {
  std::vector<LoopRun> runs;
  const std::size_t n = calls.size();

  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && calls[j + 1].tool_name == calls[i].tool_name &&
           calls[j + 1].arguments == calls[i].arguments)
      ++j;
    if (j - i + 1 >= cfg.identical_retry_min) runs.push_back({subkind::kIdenticalRetry, i, j, 0, {}});
    i = j + 1;
  }

  // pair_key[k] describes the step from call k to call k + 1.
  std::vector<std::optional<std::string>> pair_key(n > 0 ? n - 1 : 0);
  for (std::size_t k = 0; k + 1 < n; ++k)
    if (calls[k].tool_name == calls[k + 1].tool_name)
      pair_key[k] = single_varying_key(calls[k].arguments, calls[k + 1].arguments);
  for (std::size_t k = 0; k < pair_key.size();) {
    if (!pair_key[k]) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < pair_key.size() && pair_key[e + 1] == pair_key[k]) ++e;
    if (e - k + 2 >= cfg.drift_min_run) runs.push_back({subkind::kParameterDrift, k, e + 1, 0, *pair_key[k]});
    k = e + 1;
  }

  for (std::size_t p = 2; p <= cfg.cycle_period_max && p < n; ++p) {
    for (std::size_t s = 0; s + p < n;) {
      if (calls[s].tool_name != calls[s + p].tool_name) {
        ++s;
        continue;
      }
      std::size_t len = 0;
      while (s + len + p < n && calls[s + len].tool_name == calls[s + len + p].tool_name) ++len;
      if (len + p >= p * cfg.cycle_repeats_min && is_primitive_block(calls, s, p))
        runs.push_back({subkind::kMultiToolCycle, s, s + len + p - 1, p, {}});
      s += len;
    }
  }
  return runs;
}

std::vector<SignalInstance> detect_loops(const Trajectory& t, const ExecutionConfig& cfg) {
  std::vector<CallView> calls;
  for (const auto& ref : invocation_stream(t))
    calls.push_back({ref.invocation->tool_name, canonical_arguments(ref.invocation->arguments),
                     ref.message_index});

  std::vector<SignalInstance> out;
  for (const auto& run : find_loop_runs(calls, cfg)) {
    std::vector<std::size_t> span;
    for (std::size_t i = run.first; i <= run.last; ++i) span.push_back(calls[i].message_index);
    const std::size_t count = run.last - run.first + 1;
    std::string evidence;
    if (run.subkind == subkind::kIdenticalRetry) {
      evidence = std::to_string(count) + "x " + calls[run.first].tool_name + "(" +
                 excerpt(calls[run.first].arguments.dump(), 80) + ")";
    } else if (run.subkind == subkind::kParameterDrift) {
      evidence = std::to_string(count) + " calls of " + calls[run.first].tool_name + " varying '" +
                 run.varying_key + "'";
      for (std::size_t i = run.first; i <= run.last && evidence.size() < 200; ++i)
        evidence += (i == run.first ? ": " : ", ") + calls[i].arguments[run.varying_key].dump();
    } else {
      evidence = "period " + std::to_string(run.period) + " x " + std::to_string(count / run.period) +
                 ":";
      for (std::size_t i = 0; i < run.period; ++i) evidence += " " + calls[run.first + i].tool_name;
    }
    out.push_back(make_instance(Category::Loop, run.subkind, std::move(span), evidence,
                                "execution.loop"));
  }
  return out;
}

}  // namespace trajsig
