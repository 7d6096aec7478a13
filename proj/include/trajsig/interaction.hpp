// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "trajsig/signals.hpp"
#include "trajsig/textmatch.hpp"
#include "trajsig/trajectory.hpp"

namespace trajsig {

struct InteractionConfig {
  Lexicon misalignment;
  Lexicon disengagement;
  Lexicon satisfaction;
  double rephrase_similarity_threshold = 0.8;
  std::size_t rephrase_window = 2;  // in user turns
  double duplicate_threshold = 0.8;
  double prolonged_factor = 2.0;
  // Pool median of user_message_count; supplied by the caller.
  double baseline_user_turns = 1.0;

  /// Throws std::invalid_argument when a threshold or window is out of range.
  void validate() const;
};

/// Phrase cues on user turns, plus restatements: two distinct user turns at
/// most `rephrase_window` user turns apart whose token-set Jaccard similarity
/// reaches `rephrase_similarity_threshold`. One rephrase instance per later
/// turn, paired with its nearest qualifying predecessor.
std::vector<SignalInstance> detect_misalignment(const Trajectory& t, const InteractionConfig& cfg);

/// Near-duplicate assistant turns (token 3-shingle Jaccard at or above
/// `duplicate_threshold`, one instance per later turn) and a single prolonged
/// instance when the user turn count exceeds prolonged_factor * baseline.
std::vector<SignalInstance> detect_stagnation(const Trajectory& t, const InteractionConfig& cfg);

/// Disengagement phrase cues on user turns. The abandonment subkind fires only
/// when the trace marks `meta.session_end = abandoned`.
std::vector<SignalInstance> detect_disengagement(const Trajectory& t, const InteractionConfig& cfg);

/// Satisfaction phrase cues; hits in the final quartile of user turns carry
/// the `closing` subkind.
std::vector<SignalInstance> detect_satisfaction(const Trajectory& t, const InteractionConfig& cfg);

}  // namespace trajsig
