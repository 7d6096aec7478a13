// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trajsig/signals.hpp"
#include "trajsig/textmatch.hpp"
#include "trajsig/trajectory.hpp"

namespace trajsig {

/// Marker groups keyed by exhaustion subkind. Groups are kept in the fixed
/// order rate-limit, quota, outage, context-cap, malformed; that order breaks
/// ties between groups matching at the same position.
struct ExhaustionLexicon {
  std::vector<std::pair<std::string, Lexicon>> groups;

  /// Installs `lex` under `subkind`, which must be one of the fixed five.
  void set(std::string_view subkind, Lexicon lex);
  const Lexicon* find(std::string_view subkind) const;
};

inline constexpr std::string_view kExhaustionSubkinds[] = {
    subkind::kRateLimit, subkind::kQuota, subkind::kOutage, subkind::kContextCap, subkind::kMalformed};

struct ExhaustionMatch {
  std::string subkind;
  std::string matched;  // normalized excerpt of the payload
};

/// Leftmost marker hit across all groups, if any.
std::optional<ExhaustionMatch> match_exhaustion(std::string_view payload, const ExhaustionLexicon& lex);

std::vector<SignalInstance> detect_exhaustion(const Trajectory& t, const ExhaustionLexicon& lex);

enum class Attribution { Environment, Execution };

std::string_view to_string(Attribution a);

/// Environment when any exhaustion marker occurs in the observation payload.
Attribution attribute_outcome(const ToolInvocation& inv, const ToolObservation& obs,
                              const ExhaustionLexicon& lex);

}  // namespace trajsig
