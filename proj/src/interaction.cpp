// SPDX-License-Identifier: Apache-2.0
#include "trajsig/interaction.hpp"

#include <cstdio>
#include <stdexcept>

namespace trajsig {

namespace {

struct Turn {
  std::size_t message_index;
  std::string normalized;
};

std::vector<Turn> turns_of(const Trajectory& t, Role role) {
  std::vector<Turn> out;
  for (const auto& m : t.messages)
    if (m.role == role) out.push_back({m.index, normalize(m.text)});
  return out;
}

std::string matched_text(const std::string& normalized, const MatchSpan& span) {
  const auto u = to_u32(normalized);
  return to_utf8(std::u32string_view(u).substr(span.char_start, span.char_end - span.char_start));
}

std::string cue_evidence(const std::string& normalized, const MatchSpan& span) {
  char dist[32];
  std::snprintf(dist, sizeof dist, "%.3f", span.distance);
  return "\"" + matched_text(normalized, span) + "\" ~ \"" + span.phrase_id + "\" (d=" + dist + ")";
}

std::string similarity_evidence(double similarity, const std::string& a, const std::string& b) {
  char sim[32];
  std::snprintf(sim, sizeof sim, "%.3f", similarity);
  return std::string("sim=") + sim + ": \"" + excerpt(a, 100) + "\" / \"" + excerpt(b, 100) + "\"";
}

void phrase_cues(const std::vector<Turn>& user_turns, const Lexicon& lex, Category category,
                 std::string_view detector_id, std::vector<SignalInstance>& out) {
  for (const auto& turn : user_turns) {
    for (const auto& hit : fuzzy_find(turn.normalized, lex, turn.message_index)) {
      out.push_back(make_instance(category, subkind::kPhraseCue, {turn.message_index},
                                  cue_evidence(turn.normalized, hit), detector_id));
    }
  }
}

}  // namespace

void InteractionConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(rephrase_similarity_threshold) || !unit(duplicate_threshold))
    throw std::invalid_argument("interaction thresholds must lie in [0, 1]");
  if (rephrase_window < 1) throw std::invalid_argument("rephrase_window must be at least 1");
  if (!(prolonged_factor > 0.0)) throw std::invalid_argument("prolonged_factor must be positive");
  if (!(baseline_user_turns > 0.0)) throw std::invalid_argument("baseline_user_turns must be positive");
}

std::vector<SignalInstance> detect_misalignment(const Trajectory& t, const InteractionConfig& cfg) {
  std::vector<SignalInstance> out;
  const auto user = turns_of(t, Role::User);
  phrase_cues(user, cfg.misalignment, Category::Misalignment, "interaction.misalignment", out);

  for (std::size_t later = 1; later < user.size(); ++later) {
    if (user[later].normalized.empty()) continue;
    const std::size_t lo = later > cfg.rephrase_window ? later - cfg.rephrase_window : 0;
    for (std::size_t earlier = later; earlier-- > lo;) {
      const auto& a = user[earlier].normalized;
      const auto& b = user[later].normalized;
      if (a.empty() || a == b) continue;
      const double sim = token_jaccard(a, b);
      if (sim >= cfg.rephrase_similarity_threshold) {
        out.push_back(make_instance(Category::Misalignment, subkind::kRephraseSimilarity,
                                    {user[earlier].message_index, user[later].message_index},
                                    similarity_evidence(sim, a, b), "interaction.misalignment"));
        break;
      }
    }
  }
  return out;
}

std::vector<SignalInstance> detect_stagnation(const Trajectory& t, const InteractionConfig& cfg) {
  if (!(cfg.baseline_user_turns > 0.0))
    throw std::invalid_argument("detect_stagnation requires a positive baseline");
  std::vector<SignalInstance> out;

  std::vector<Turn> assistant;
  for (auto& turn : turns_of(t, Role::Assistant))
    if (!turn.normalized.empty()) assistant.push_back(std::move(turn));

  for (std::size_t later = 1; later < assistant.size(); ++later) {
    for (std::size_t earlier = later; earlier-- > 0;) {
      const double sim = near_duplicate(assistant[earlier].normalized, assistant[later].normalized);
      if (sim >= cfg.duplicate_threshold) {
        out.push_back(make_instance(
            Category::Stagnation, subkind::kNearDuplicateAssistant,
            {assistant[earlier].message_index, assistant[later].message_index},
            similarity_evidence(sim, assistant[earlier].normalized, assistant[later].normalized),
            "interaction.stagnation"));
        break;
      }
    }
  }

  const auto user_turns = user_message_count(t);
  if (static_cast<double>(user_turns) > cfg.prolonged_factor * cfg.baseline_user_turns) {
    std::size_t last_user = 0;
    for (const auto& m : t.messages)
      if (m.role == Role::User) last_user = m.index;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu user turns > %.2f x baseline %.2f", user_turns,
                  cfg.prolonged_factor, cfg.baseline_user_turns);
    out.push_back(make_instance(Category::Stagnation, subkind::kProlonged, {last_user}, buf,
                                "interaction.stagnation"));
  }
  return out;
}

std::vector<SignalInstance> detect_disengagement(const Trajectory& t, const InteractionConfig& cfg) {
  std::vector<SignalInstance> out;
  const auto user = turns_of(t, Role::User);
  phrase_cues(user, cfg.disengagement, Category::Disengagement, "interaction.disengagement", out);

  auto end = t.meta.find("session_end");
  if (end != t.meta.end() && end->second == "abandoned") {
    std::optional<std::size_t> anchor;
    for (const auto& m : t.messages)
      if (m.role == Role::User || m.role == Role::Assistant) anchor = m.index;
    if (!user.empty()) anchor = user.back().message_index;
    const bool closed_by_user =
        !user.empty() && !fuzzy_find(user.back().normalized, cfg.satisfaction).empty();
    if (anchor && !closed_by_user) {
      out.push_back(make_instance(Category::Disengagement, subkind::kAbandonment, {*anchor},
                                  "session ended without a user closing turn",
                                  "interaction.disengagement"));
    }
  }
  return out;
}

std::vector<SignalInstance> detect_satisfaction(const Trajectory& t, const InteractionConfig& cfg) {
  std::vector<SignalInstance> out;
  const auto user = turns_of(t, Role::User);
  const std::size_t total = user.size();
  for (std::size_t ordinal = 0; ordinal < total; ++ordinal) {
    const auto& turn = user[ordinal];
    // Final quartile: 1-based position strictly beyond 3/4 of the user turns.
    const bool closing = (ordinal + 1) * 4 > 3 * total;
    for (const auto& hit : fuzzy_find(turn.normalized, cfg.satisfaction, turn.message_index)) {
      out.push_back(make_instance(Category::Satisfaction,
                                  closing ? subkind::kClosing : subkind::kPhraseCue,
                                  {turn.message_index}, cue_evidence(turn.normalized, hit),
                                  "interaction.satisfaction"));
    }
  }
  return out;
}

}  // namespace trajsig
