// SPDX-License-Identifier: Apache-2.0
#include "trajsig/environment.hpp"

#include <algorithm>
#include <stdexcept>

namespace trajsig {

void ExhaustionLexicon::set(std::string_view kind, Lexicon lex) {
  const auto* known = std::find(std::begin(kExhaustionSubkinds), std::end(kExhaustionSubkinds), kind);
  if (known == std::end(kExhaustionSubkinds))
    throw std::invalid_argument("unknown exhaustion subkind '" + std::string(kind) + "'");
  for (auto& [name, existing] : groups) {
    if (name == kind) {
      existing = std::move(lex);
      return;
    }
  }
  groups.emplace_back(std::string(kind), std::move(lex));
  const auto rank = [](const std::string& name) {
    return std::find(std::begin(kExhaustionSubkinds), std::end(kExhaustionSubkinds), name) -
           std::begin(kExhaustionSubkinds);
  };
  std::sort(groups.begin(), groups.end(),
            [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
}

const Lexicon* ExhaustionLexicon::find(std::string_view kind) const {
  for (const auto& [name, lex] : groups)
    if (name == kind) return &lex;
  return nullptr;
}

std::optional<ExhaustionMatch> match_exhaustion(std::string_view payload, const ExhaustionLexicon& lex) {
  const auto norm = normalize(payload);
  if (norm.empty()) return std::nullopt;
  std::optional<std::pair<std::size_t, ExhaustionMatch>> best;
  for (const auto& [kind, markers] : lex.groups) {
    const auto hits = fuzzy_find(norm, markers);
    if (hits.empty()) continue;
    const auto& first = hits.front();
    // Strictly-earlier wins, so equal positions keep the earlier group.
    if (!best || first.char_start < best->first) {
      const auto u = to_u32(norm);
      best.emplace(first.char_start,
                   ExhaustionMatch{kind, to_utf8(std::u32string_view(u).substr(
                                             first.char_start, first.char_end - first.char_start))});
    }
  }
  if (!best) return std::nullopt;
  return best->second;
}

std::vector<SignalInstance> detect_exhaustion(const Trajectory& t, const ExhaustionLexicon& lex) {
  std::vector<SignalInstance> out;
  for (const auto& m : t.messages) {
    if (!m.observation) continue;
    if (auto hit = match_exhaustion(m.observation->payload, lex)) {
      out.push_back(make_instance(Category::Exhaustion, hit->subkind, {m.index},
                                  "\"" + hit->matched + "\" in: " + excerpt(m.observation->payload, 160),
                                  "environment.exhaustion"));
    }
  }
  return out;
}

std::string_view to_string(Attribution a) {
  return a == Attribution::Environment ? "Environment" : "Execution";
}

Attribution attribute_outcome(const ToolInvocation& /*inv*/, const ToolObservation& obs,
                              const ExhaustionLexicon& lex) {
  return match_exhaustion(obs.payload, lex) ? Attribution::Environment : Attribution::Execution;
}

}  // namespace trajsig
