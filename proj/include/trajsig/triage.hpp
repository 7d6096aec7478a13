// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajsig/environment.hpp"
#include "trajsig/execution.hpp"
#include "trajsig/interaction.hpp"
#include "trajsig/signals.hpp"
#include "trajsig/trajectory.hpp"

namespace trajsig {

struct DetectorConfig {
  InteractionConfig interaction;
  ExecutionConfig execution;
  ExhaustionLexicon exhaustion;
};

/// Directory holding the lexicon files shipped with the project.
std::filesystem::path default_lexicon_dir();

/// Loads misalignment.lex, disengagement.lex, satisfaction.lex,
/// empty-result.lex and exhaustion-<subkind>.lex from `dir`.
DetectorConfig load_detector_config(const std::filesystem::path& dir);

/// Applies an override document of the form
/// `{"interaction": {...}, "execution": {...}}` whose keys mirror the config
/// field names. Unknown keys are rejected.
void apply_threshold_overrides(DetectorConfig& cfg, const nlohmann::json& overrides);

/// Median user turn count over the pool, floored at 1 so the prolonged rule
/// always has a positive baseline.
double median_user_turns(const std::vector<Trajectory>& pool);

struct SignalReport {
  std::string trajectory_id;
  std::vector<SignalInstance> instances;
  std::set<Category> activations;
  std::map<Category, std::size_t> counts;

  bool active(Category c) const { return activations.contains(c); }
  bool operator==(const SignalReport&) const = default;
};

/// Runs all seven detectors. Failure outcomes attributed to the environment
/// are dropped, so they surface only as Exhaustion.
SignalReport build_report(const Trajectory& t, const DetectorConfig& cfg);

/// Restores the activation/count invariants and canonical instance order.
SignalReport make_report(std::string trajectory_id, std::vector<SignalInstance> instances);

nlohmann::ordered_json to_json(const SignalReport& r);
SignalReport signal_report_from_json(const nlohmann::json& j);

struct TriageConfig {
  std::map<Category, double> category_weights = {
      {Category::Misalignment, 1.0}, {Category::Stagnation, 1.0}, {Category::Disengagement, 1.0},
      {Category::Satisfaction, 1.0}, {Category::Failure, 1.0},    {Category::Loop, 1.0},
  };
  double exemplar_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t heuristic_min_user_msgs = 10;
  std::size_t sample_size = 100;
  // Rank qualifiers by seeded hash only, ignoring score.
  bool flat = false;

  void validate() const;
};

/// Sum of weights over activated learning-oriented categories.
double triage_score(const SignalReport& r, const TriageConfig& cfg);

enum class Strategy { Random, Heuristic, Signal };
enum class Stream { NotApplicable, Failure, Exemplar };

std::string_view to_string(Strategy s);
std::string_view to_string(Stream s);
std::optional<Strategy> strategy_from_string(std::string_view s);
std::optional<Stream> stream_from_string(std::string_view s);

struct SampleSet {
  Strategy strategy = Strategy::Random;
  std::uint64_t seed = 0;
  std::vector<std::string> trajectory_ids;
  std::vector<Stream> provenance;  // parallel to trajectory_ids
  std::size_t qualifying = 0;      // size of the pool the draw was made from

  bool operator==(const SampleSet&) const = default;
};

nlohmann::ordered_json to_json(const SampleSet& s);
SampleSet sample_set_from_json(const nlohmann::json& j);

class PoolTooSmall : public std::runtime_error {
 public:
  PoolTooSmall(std::size_t available, std::size_t required);
  std::size_t available() const noexcept { return available_; }
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t available_;
  std::size_t required_;
};

/// Deterministic per-(seed, id) key; sorting by it is a uniform shuffle.
std::uint64_t seeded_rank(std::uint64_t seed, std::string_view id);

SampleSet sample_random(const std::vector<Trajectory>& pool, std::size_t n, std::uint64_t seed);
SampleSet sample_heuristic(const std::vector<Trajectory>& pool, const TriageConfig& cfg);

/// Two streams over trajectories with a positive score: exemplars (Satisfaction
/// without Disengagement) fill ceil(exemplar_fraction * n) slots and the
/// failure stream the rest, each ranked by score then seeded id hash. A short
/// stream is backfilled from the other. `reports` must cover the pool.
SampleSet sample_signal(const std::vector<Trajectory>& pool, const std::vector<SignalReport>& reports,
                        const TriageConfig& cfg);

}  // namespace trajsig
