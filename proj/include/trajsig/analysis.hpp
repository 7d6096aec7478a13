// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajsig/annotation.hpp"
#include "trajsig/stats.hpp"

namespace trajsig {

struct ExportItem {
  std::string trajectory_id;
  std::string blinded_id;
  std::vector<ProvenanceLink> provenance;
  std::optional<long long> reward;
  std::string domain;
  std::vector<std::string> activations;
};

struct ExportLabel {
  std::string annotator_id;
  std::string trajectory_id;
  bool informative = false;
  MainReason main_reason = MainReason::NoneUnclear;
};

struct LabelExport {
  std::vector<std::string> annotators;
  std::vector<ExportItem> items;
  std::vector<ExportLabel> labels;
};

/// Reads the JSONL produced by AnnotationService::export_labels. An empty
/// input raises MissingVotes.
LabelExport parse_export(std::string_view jsonl);

struct RateCell {
  stats::BinomialCount count;
  stats::Interval ci;
};

struct StrategyRates {
  Strategy strategy = Strategy::Random;
  RateCell overall;
  std::optional<RateCell> failed;     // reward = 0
  std::optional<RateCell> succeeded;  // reward = 1
};

struct FisherComparison {
  Strategy a = Strategy::Random;
  Strategy b = Strategy::Random;
  // Absent when the 2x2 table has an empty margin.
  std::optional<double> overall;
  std::optional<double> failed;
  std::optional<double> succeeded;
};

struct BinaryAgreement {
  stats::Agreement ac1;
  stats::Agreement kappa;
  stats::PrevalenceBias indices;
  std::map<std::string, double> rater_yes_rate;
  std::size_t items = 0;
};

struct ReasonAgreement {
  stats::Agreement ac1;
  stats::Agreement kappa;
  std::size_t items = 0;
};

struct ReasonDistribution {
  Strategy strategy = Strategy::Random;
  std::size_t informative = 0;
  std::map<MainReason, std::size_t> counts;
};

struct DomainRates {
  std::string domain;
  std::vector<StrategyRates> strategies;
};

struct AnalysisReport {
  std::size_t items = 0;
  std::vector<std::string> annotators;
  std::vector<StrategyRates> rates;
  std::vector<FisherComparison> fisher;
  // Reward mix of the Random sample, used as the standardization reference.
  std::optional<double> reference_failed_weight;
  std::map<Strategy, double> standardized;
  std::optional<stats::Efficiency> efficiency;
  BinaryAgreement informative_agreement;
  // Main-reason agreement over items every rater called informative.
  std::optional<ReasonAgreement> reason_agreement;
  std::vector<ReasonDistribution> reasons;
  std::vector<DomainRates> domains;
};

/// Majority-vote informativeness per strategy, overall and per reward stratum,
/// with everything derived from it. Every item needs a label from every
/// annotator (MissingVotes otherwise); the annotator count must be odd.
AnalysisReport compute_report(const LabelExport& e);

nlohmann::ordered_json to_json(const AnalysisReport& r);

/// Plain-text rendering of the rate table and the main-reason table.
std::string render_tables(const AnalysisReport& r);

/// render_tables plus standardization, efficiency, agreement and per-domain
/// sections.
std::string render_report(const AnalysisReport& r);

/// Compares report JSON against {"tolerance": t, "values": {pointer: expected}}.
/// An expected value may also be {"value": v, "tolerance": t}. Returns one
/// message per mismatch.
std::vector<std::string> check_against(const nlohmann::ordered_json& report, const nlohmann::json& golden);

}  // namespace trajsig
