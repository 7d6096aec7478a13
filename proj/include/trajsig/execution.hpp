// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>
#include <vector>

#include "trajsig/signals.hpp"
#include "trajsig/textmatch.hpp"
#include "trajsig/trajectory.hpp"

namespace trajsig {

struct ExecutionConfig {
  std::size_t identical_retry_min = 3;
  std::size_t drift_min_run = 3;
  std::size_t cycle_period_max = 4;
  std::size_t cycle_repeats_min = 2;
  // "not found"-class markers; empty payloads and empty collection literals
  // are recognised without it.
  Lexicon empty_result_markers;

  void validate() const;
};

/// A non-advancing tool outcome together with the invocation that caused it.
struct FailureOutcome {
  InvocationRef ref;
  std::string_view subkind;
};

/// Error status, an `error`-prefixed payload when the source had no status,
/// or an empty/not-found payload. At most one outcome per invocation.
std::vector<FailureOutcome> failure_outcomes(const Trajectory& t, const ExecutionConfig& cfg);

bool is_empty_result(std::string_view payload, const Lexicon& markers);

/// One instance per failure outcome; evidence names the tool and a digest of
/// its canonical arguments. Span = invoking message and observation message.
std::vector<SignalInstance> detect_failures(const Trajectory& t, const ExecutionConfig& cfg);
SignalInstance failure_instance(const FailureOutcome& outcome);

/// Identical retries, single-key parameter drift, and tool-name cycles over
/// invocation_stream(t). Only maximal runs are reported within a subkind
/// (per period for cycles); spans are the hosting assistant messages.
std::vector<SignalInstance> detect_loops(const Trajectory& t, const ExecutionConfig& cfg);

/// Loop detection on a bare call sequence. Each element's message index is
/// used for spans. Exposed for oracle testing.
struct CallView {
  std::string tool_name;
  nlohmann::json arguments;  // canonical
  std::size_t message_index = 0;
};

struct LoopRun {
  std::string_view subkind;
  std::size_t first = 0;  // index into the call sequence
  std::size_t last = 0;   // inclusive
  std::size_t period = 0; // cycles only
  std::string varying_key; // drift only
};

std::vector<LoopRun> find_loop_runs(const std::vector<CallView>& calls, const ExecutionConfig& cfg);

}  // namespace trajsig
