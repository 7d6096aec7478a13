// SPDX-License-Identifier: Apache-2.0
#include "trajsig/triage.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#ifndef TRAJSIG_LEXICON_DIR
#define TRAJSIG_LEXICON_DIR "lexicons"
#endif

namespace trajsig {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& target, std::set<std::string>& used) {
  if (auto it = obj.find(key); it != obj.end()) {
    target = it->get<T>();
    used.insert(key);
  }
}

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& used, const char* section) {
  for (const auto& [key, _] : obj.items())
    if (!used.contains(key))
      throw std::invalid_argument(std::string("unknown ") + section + " override '" + key + "'");
}

// Pool-order-independent ranking: score descending, then seeded id hash.
std::vector<std::string> rank_ids(std::vector<std::pair<std::string, double>> scored,
                                  std::uint64_t seed, bool flat) {
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (!flat && a.second != b.second) return a.second > b.second;
    const auto ka = seeded_rank(seed, a.first), kb = seeded_rank(seed, b.first);
    if (ka != kb) return ka < kb;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (auto& [id, _] : scored) out.push_back(std::move(id));
  return out;
}

SampleSet uniform_draw(std::vector<std::string> ids, std::size_t n, std::uint64_t seed,
                       Strategy strategy) {
  if (ids.size() < n) throw PoolTooSmall(ids.size(), n);
  SampleSet s;
  s.strategy = strategy;
  s.seed = seed;
  s.qualifying = ids.size();
  std::vector<std::pair<std::string, double>> keyed;
  keyed.reserve(ids.size());
  for (auto& id : ids) keyed.emplace_back(std::move(id), 0.0);
  auto ranked = rank_ids(std::move(keyed), seed, true);
  ranked.resize(n);
  s.trajectory_ids = std::move(ranked);
  s.provenance.assign(n, Stream::NotApplicable);
  return s;
}

}  // namespace

std::filesystem::path default_lexicon_dir() { return TRAJSIG_LEXICON_DIR; }

DetectorConfig load_detector_config(const std::filesystem::path& dir) {
  DetectorConfig cfg;
  cfg.interaction.misalignment = load_lexicon(dir / "misalignment.lex");
  cfg.interaction.disengagement = load_lexicon(dir / "disengagement.lex");
  cfg.interaction.satisfaction = load_lexicon(dir / "satisfaction.lex");
  cfg.execution.empty_result_markers = load_lexicon(dir / "empty-result.lex");
  for (auto kind : kExhaustionSubkinds) {
    auto lex = load_lexicon(dir / ("exhaustion-" + std::string(kind) + ".lex"));
    cfg.exhaustion.set(kind, std::move(lex));
  }
  return cfg;
}

void apply_threshold_overrides(DetectorConfig& cfg, const nlohmann::json& overrides) {
  std::set<std::string> top;
  if (auto it = overrides.find("interaction"); it != overrides.end()) {
    top.insert("interaction");
    std::set<std::string> used;
    auto& ic = cfg.interaction;
    read_field(*it, "rephrase_similarity_threshold", ic.rephrase_similarity_threshold, used);
    read_field(*it, "rephrase_window", ic.rephrase_window, used);
    read_field(*it, "duplicate_threshold", ic.duplicate_threshold, used);
    read_field(*it, "prolonged_factor", ic.prolonged_factor, used);
    read_field(*it, "baseline_user_turns", ic.baseline_user_turns, used);
    reject_unknown(*it, used, "interaction");
    ic.validate();
  }
  if (auto it = overrides.find("execution"); it != overrides.end()) {
    top.insert("execution");
    std::set<std::string> used;
    auto& ec = cfg.execution;
    read_field(*it, "identical_retry_min", ec.identical_retry_min, used);
    read_field(*it, "drift_min_run", ec.drift_min_run, used);
    read_field(*it, "cycle_period_max", ec.cycle_period_max, used);
    read_field(*it, "cycle_repeats_min", ec.cycle_repeats_min, used);
    reject_unknown(*it, used, "execution");
    ec.validate();
  }
  reject_unknown(overrides, top, "top-level");
}

double median_user_turns(const std::vector<Trajectory>& pool) {
  if (pool.empty()) return 1.0;
  std::vector<std::size_t> counts;
  counts.reserve(pool.size());
  for (const auto& t : pool) counts.push_back(user_message_count(t));
  std::sort(counts.begin(), counts.end());
  const std::size_t mid = counts.size() / 2;
  const double median = counts.size() % 2 == 1
                            ? static_cast<double>(counts[mid])
                            : (static_cast<double>(counts[mid - 1]) + static_cast<double>(counts[mid])) / 2.0;
  return std::max(median, 1.0);
}

SignalReport make_report(std::string trajectory_id, std::vector<SignalInstance> instances) {
  SignalReport r;
  r.trajectory_id = std::move(trajectory_id);
  std::stable_sort(instances.begin(), instances.end(), [](const SignalInstance& a, const SignalInstance& b) {
    return std::tie(a.span.front(), a.category, a.subkind, a.span, a.evidence) <
           std::tie(b.span.front(), b.category, b.subkind, b.span, b.evidence);
  });
  for (const auto& s : instances) {
    ++r.counts[s.category];
    r.activations.insert(s.category);
  }
  r.instances = std::move(instances);
  return r;
}

SignalReport build_report(const Trajectory& t, const DetectorConfig& cfg) {
  std::vector<SignalInstance> all;
  auto append = [&all](std::vector<SignalInstance> v) {
    all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  };
  append(detect_misalignment(t, cfg.interaction));
  append(detect_stagnation(t, cfg.interaction));
  append(detect_disengagement(t, cfg.interaction));
  append(detect_satisfaction(t, cfg.interaction));
  for (const auto& outcome : failure_outcomes(t, cfg.execution)) {
    if (attribute_outcome(*outcome.ref.invocation, *outcome.ref.observation, cfg.exhaustion) ==
        Attribution::Environment)
      continue;
    all.push_back(failure_instance(outcome));
  }
  append(detect_loops(t, cfg.execution));
  append(detect_exhaustion(t, cfg.exhaustion));
  return make_report(t.id, std::move(all));
}

nlohmann::ordered_json to_json(const SignalReport& r) {
  nlohmann::ordered_json j;
  j["trajectory_id"] = r.trajectory_id;
  j["activations"] = nlohmann::ordered_json::array();
  for (auto c : r.activations) j["activations"].push_back(to_string(c));
  j["counts"] = nlohmann::ordered_json::object();
  for (const auto& [c, n] : r.counts) j["counts"][std::string(to_string(c))] = n;
  j["instances"] = nlohmann::ordered_json::array();
  for (const auto& s : r.instances) j["instances"].push_back(to_json(s));
  return j;
}

SignalReport signal_report_from_json(const nlohmann::json& j) {
  std::vector<SignalInstance> instances;
  for (const auto& s : j.at("instances")) instances.push_back(signal_instance_from_json(s));
  return make_report(j.at("trajectory_id").get<std::string>(), std::move(instances));
}

void TriageConfig::validate() const {
  if (category_weights.contains(Category::Exhaustion))
    throw std::invalid_argument("Exhaustion cannot carry a triage weight");
  for (const auto& [c, w] : category_weights)
    if (!(w >= 0.0)) throw std::invalid_argument("category weights must be non-negative");
  if (!(exemplar_fraction >= 0.0 && exemplar_fraction <= 1.0))
    throw std::invalid_argument("exemplar_fraction must lie in [0, 1]");
  if (sample_size < 1) throw std::invalid_argument("sample size must be at least 1");
}

double triage_score(const SignalReport& r, const TriageConfig& cfg) {
  double score = 0.0;
  for (auto c : r.activations) {
    if (c == Category::Exhaustion) continue;
    auto it = cfg.category_weights.find(c);
    if (it != cfg.category_weights.end()) score += it->second;
  }
  return score;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Heuristic: return "heuristic";
    case Strategy::Signal: return "signal";
  }
  return "random";
}

std::string_view to_string(Stream s) {
  switch (s) {
    case Stream::NotApplicable: return "n/a";
    case Stream::Failure: return "failure-stream";
    case Stream::Exemplar: return "exemplar-stream";
  }
  return "n/a";
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  for (auto v : {Strategy::Random, Strategy::Heuristic, Strategy::Signal})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<Stream> stream_from_string(std::string_view s) {
  for (auto v : {Stream::NotApplicable, Stream::Failure, Stream::Exemplar})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

nlohmann::ordered_json to_json(const SampleSet& s) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(s.strategy);
  j["seed"] = s.seed;
  j["n"] = s.trajectory_ids.size();
  j["qualifying"] = s.qualifying;
  j["trajectory_ids"] = s.trajectory_ids;
  j["provenance"] = nlohmann::ordered_json::array();
  for (auto p : s.provenance) j["provenance"].push_back(to_string(p));
  return j;
}

SampleSet sample_set_from_json(const nlohmann::json& j) {
  SampleSet s;
  auto strategy = strategy_from_string(j.at("strategy").get<std::string>());
  if (!strategy) throw std::invalid_argument("unknown strategy " + j.at("strategy").dump());
  s.strategy = *strategy;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.qualifying = j.value("qualifying", std::size_t{0});
  s.trajectory_ids = j.at("trajectory_ids").get<std::vector<std::string>>();
  for (const auto& p : j.at("provenance")) {
    auto stream = stream_from_string(p.get<std::string>());
    if (!stream) throw std::invalid_argument("unknown provenance " + p.dump());
    s.provenance.push_back(*stream);
  }
  if (s.provenance.size() != s.trajectory_ids.size())
    throw std::invalid_argument("provenance and trajectory_ids differ in length");
  return s;
}

PoolTooSmall::PoolTooSmall(std::size_t available, std::size_t required)
    : std::runtime_error("pool too small: " + std::to_string(available) + " qualifying, " +
                         std::to_string(required) + " required"),
      available_(available),
      required_(required) {}

std::uint64_t seeded_rank(std::uint64_t seed, std::string_view id) {
  return splitmix64(fnv1a64(id) ^ splitmix64(seed));
}

SampleSet sample_random(const std::vector<Trajectory>& pool, std::size_t n, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& t : pool) ids.push_back(t.id);
  return uniform_draw(std::move(ids), n, seed, Strategy::Random);
}

SampleSet sample_heuristic(const std::vector<Trajectory>& pool, const TriageConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& t : pool)
    if (user_message_count(t) >= cfg.heuristic_min_user_msgs) ids.push_back(t.id);
  return uniform_draw(std::move(ids), cfg.sample_size, cfg.seed, Strategy::Heuristic);
}

SampleSet sample_signal(const std::vector<Trajectory>& pool, const std::vector<SignalReport>& reports,
                        const TriageConfig& cfg) {
  cfg.validate();
  std::unordered_map<std::string_view, const SignalReport*> by_id;
  for (const auto& r : reports) by_id.emplace(r.trajectory_id, &r);

  std::vector<std::pair<std::string, double>> exemplars, failures;
  for (const auto& t : pool) {
    auto it = by_id.find(t.id);
    if (it == by_id.end()) throw std::invalid_argument("no signal report for trajectory '" + t.id + "'");
    const auto& r = *it->second;
    const double score = triage_score(r, cfg);
    if (!(score > 0.0)) continue;
    if (r.active(Category::Satisfaction) && !r.active(Category::Disengagement))
      exemplars.emplace_back(t.id, score);
    const bool problem = r.active(Category::Misalignment) || r.active(Category::Stagnation) ||
                         r.active(Category::Disengagement) || r.active(Category::Failure) ||
                         r.active(Category::Loop);
    if (problem) failures.emplace_back(t.id, score);
  }

  const auto ranked_exemplars = rank_ids(std::move(exemplars), cfg.seed, cfg.flat);
  const auto ranked_failures = rank_ids(std::move(failures), cfg.seed, cfg.flat);

  const std::size_t n = cfg.sample_size;
  std::unordered_set<std::string> distinct(ranked_exemplars.begin(), ranked_exemplars.end());
  distinct.insert(ranked_failures.begin(), ranked_failures.end());
  if (distinct.size() < n) throw PoolTooSmall(distinct.size(), n);

  SampleSet s;
  s.strategy = Strategy::Signal;
  s.seed = cfg.seed;
  s.qualifying = distinct.size();
  std::unordered_set<std::string> chosen;
  auto take = [&](const std::vector<std::string>& ranked, Stream stream, std::size_t quota) {
    for (const auto& id : ranked) {
      if (quota == 0 || s.trajectory_ids.size() == n) break;
      if (!chosen.insert(id).second) continue;
      s.trajectory_ids.push_back(id);
      s.provenance.push_back(stream);
      --quota;
    }
  };
  const auto exemplar_quota =
      std::min(n, static_cast<std::size_t>(std::ceil(cfg.exemplar_fraction * static_cast<double>(n) - 1e-9)));
  take(ranked_exemplars, Stream::Exemplar, exemplar_quota);
  take(ranked_failures, Stream::Failure, n - s.trajectory_ids.size());
  // Backfill whichever stream still has candidates.
  take(ranked_exemplars, Stream::Exemplar, n - s.trajectory_ids.size());
  return s;
}

}  // namespace trajsig
