// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace trajsig {

enum class Category {
  Misalignment,
  Stagnation,
  Disengagement,
  Satisfaction,
  Failure,
  Loop,
  Exhaustion,
};

inline constexpr std::array<Category, 7> kAllCategories = {
    Category::Misalignment, Category::Stagnation, Category::Disengagement, Category::Satisfaction,
    Category::Failure,      Category::Loop,       Category::Exhaustion,
};

// Interaction and execution categories; the only ones that feed triage scores.
inline constexpr std::array<Category, 6> kLearningCategories = {
    Category::Misalignment, Category::Stagnation, Category::Disengagement,
    Category::Satisfaction, Category::Failure,    Category::Loop,
};

std::string_view to_string(Category c);
std::optional<Category> category_from_string(std::string_view s);

namespace subkind {
inline constexpr std::string_view kPhraseCue = "phrase-cue";
inline constexpr std::string_view kRephraseSimilarity = "rephrase-similarity";
inline constexpr std::string_view kNearDuplicateAssistant = "near-duplicate-assistant";
inline constexpr std::string_view kProlonged = "prolonged";
inline constexpr std::string_view kAbandonment = "abandonment";
inline constexpr std::string_view kClosing = "closing";
inline constexpr std::string_view kErrorStatus = "error-status";
inline constexpr std::string_view kErrorPayload = "error-payload";
inline constexpr std::string_view kEmptyResult = "empty-result";
inline constexpr std::string_view kIdenticalRetry = "identical-retry";
inline constexpr std::string_view kParameterDrift = "parameter-drift";
inline constexpr std::string_view kMultiToolCycle = "multi-tool-cycle";
inline constexpr std::string_view kRateLimit = "rate-limit";
inline constexpr std::string_view kQuota = "quota";
inline constexpr std::string_view kOutage = "outage";
inline constexpr std::string_view kContextCap = "context-cap";
inline constexpr std::string_view kMalformed = "malformed";
}  // namespace subkind

/// True when (category, subkind) appears in the registered detector table.
bool is_registered(Category c, std::string_view subkind);

inline constexpr std::size_t kMaxEvidenceChars = 240;

struct SignalInstance {
  Category category = Category::Misalignment;
  std::string subkind;
  std::vector<std::size_t> span;  // message indices, non-empty, ascending
  std::string evidence;           // at most kMaxEvidenceChars code points
  std::string detector_id;
  double weight_hint = 1.0;

  bool operator==(const SignalInstance&) const = default;
};

/// Builds an instance with a sorted, deduplicated span and clipped evidence.
SignalInstance make_instance(Category c, std::string_view subkind, std::vector<std::size_t> span,
                             std::string_view evidence, std::string_view detector_id);

nlohmann::ordered_json to_json(const SignalInstance& s);
SignalInstance signal_instance_from_json(const nlohmann::json& j);

}  // namespace trajsig
