// SPDX-License-Identifier: Apache-2.0
#include "trajsig/signals.hpp"

#include <algorithm>
#include <stdexcept>

#include "trajsig/textmatch.hpp"

namespace trajsig {

namespace {

struct Registration {
  Category category;
  std::string_view subkind;
};

constexpr Registration kRegistry[] = {
    {Category::Misalignment, subkind::kPhraseCue},
    {Category::Misalignment, subkind::kRephraseSimilarity},
    {Category::Stagnation, subkind::kNearDuplicateAssistant},
    {Category::Stagnation, subkind::kProlonged},
    {Category::Disengagement, subkind::kPhraseCue},
    {Category::Disengagement, subkind::kAbandonment},
    {Category::Satisfaction, subkind::kPhraseCue},
    {Category::Satisfaction, subkind::kClosing},
    {Category::Failure, subkind::kErrorStatus},
    {Category::Failure, subkind::kErrorPayload},
    {Category::Failure, subkind::kEmptyResult},
    {Category::Loop, subkind::kIdenticalRetry},
    {Category::Loop, subkind::kParameterDrift},
    {Category::Loop, subkind::kMultiToolCycle},
    {Category::Exhaustion, subkind::kRateLimit},
    {Category::Exhaustion, subkind::kQuota},
    {Category::Exhaustion, subkind::kOutage},
    {Category::Exhaustion, subkind::kContextCap},
    {Category::Exhaustion, subkind::kMalformed},
};

}  // namespace

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Misalignment: return "Misalignment";
    case Category::Stagnation: return "Stagnation";
    case Category::Disengagement: return "Disengagement";
    case Category::Satisfaction: return "Satisfaction";
    case Category::Failure: return "Failure";
    case Category::Loop: return "Loop";
    case Category::Exhaustion: return "Exhaustion";
  }
  return "Misalignment";
}

std::optional<Category> category_from_string(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

bool is_registered(Category c, std::string_view kind) {
  return std::any_of(std::begin(kRegistry), std::end(kRegistry),
                     [&](const Registration& r) { return r.category == c && r.subkind == kind; });
}

SignalInstance make_instance(Category c, std::string_view kind, std::vector<std::size_t> span,
                             std::string_view evidence, std::string_view detector_id) {
  std::sort(span.begin(), span.end());
  span.erase(std::unique(span.begin(), span.end()), span.end());
  SignalInstance s;
  s.category = c;
  s.subkind = std::string(kind);
  s.span = std::move(span);
  s.evidence = excerpt(evidence, kMaxEvidenceChars);
  s.detector_id = std::string(detector_id);
  return s;
}

nlohmann::ordered_json to_json(const SignalInstance& s) {
  nlohmann::ordered_json j;
  j["category"] = to_string(s.category);
  j["subkind"] = s.subkind;
  j["span"] = s.span;
  j["evidence"] = s.evidence;
  j["detector_id"] = s.detector_id;
  j["weight_hint"] = s.weight_hint;
  return j;
}

SignalInstance signal_instance_from_json(const nlohmann::json& j) {
  SignalInstance s;
  auto cat = category_from_string(j.at("category").get<std::string>());
  if (!cat) throw std::invalid_argument("unknown category " + j.at("category").dump());
  s.category = *cat;
  s.subkind = j.at("subkind").get<std::string>();
  if (!is_registered(s.category, s.subkind))
    throw std::invalid_argument("unregistered subkind '" + s.subkind + "' for " + std::string(to_string(s.category)));
  s.span = j.at("span").get<std::vector<std::size_t>>();
  if (s.span.empty()) throw std::invalid_argument("signal instance with an empty span");
  if (!std::is_sorted(s.span.begin(), s.span.end()))
    throw std::invalid_argument("signal instance span must be ascending");
  s.evidence = j.value("evidence", "");
  s.detector_id = j.value("detector_id", "");
  s.weight_hint = j.value("weight_hint", 1.0);
  return s;
}

}  // namespace trajsig
