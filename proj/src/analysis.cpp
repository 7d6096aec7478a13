// SPDX-License-Identifier: Apache-2.0
#include "trajsig/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace trajsig {

namespace {

using OJson = nlohmann::ordered_json;
using stats::BinomialCount;
using stats::StatsError;

constexpr Strategy kStrategies[] = {Strategy::Random, Strategy::Heuristic, Strategy::Signal};

struct ItemVotes {
  const ExportItem* item = nullptr;
  bool majority = false;
  MainReason reason = MainReason::NoneUnclear;
  std::vector<bool> yes;
  std::vector<MainReason> reasons;
};

bool has_strategy(const ExportItem& it, Strategy s) {
  return std::any_of(it.provenance.begin(), it.provenance.end(), [&](const auto& p) { return p.strategy == s; });
}

RateCell rate_cell(const std::vector<const ItemVotes*>& items) {
  std::vector<std::string> ids;
  std::map<std::string, bool> votes;
  for (const auto* v : items) {
    ids.push_back(v->item->trajectory_id);
    votes[v->item->trajectory_id] = v->majority;
  }
  RateCell c;
  c.count = stats::informativeness_rate(ids, votes);
  c.ci = stats::clopper_pearson(c.count);
  return c;
}

std::optional<StrategyRates> strategy_rates(Strategy s, const std::vector<ItemVotes>& all,
                                            const std::string* domain = nullptr) {
  std::vector<const ItemVotes*> overall, failed, succeeded;
  for (const auto& v : all) {
    if (!has_strategy(*v.item, s)) continue;
    if (domain && v.item->domain != *domain) continue;
    overall.push_back(&v);
    if (v.item->reward == 0) failed.push_back(&v);
    if (v.item->reward == 1) succeeded.push_back(&v);
  }
  if (overall.empty()) return std::nullopt;
  StrategyRates r;
  r.strategy = s;
  r.overall = rate_cell(overall);
  if (!failed.empty()) r.failed = rate_cell(failed);
  if (!succeeded.empty()) r.succeeded = rate_cell(succeeded);
  return r;
}

std::optional<double> fisher(const std::optional<RateCell>& a, const std::optional<RateCell>& b) {
  if (!a || !b) return std::nullopt;
  const auto& x = a->count;
  const auto& y = b->count;
  try {
    return stats::fisher_exact_two_sided(x.successes, x.trials - x.successes, y.successes, y.trials - y.successes);
  } catch (const StatsError& e) {
    if (e.code() == StatsError::Code::DegenerateTable) return std::nullopt;
    throw;
  }
}

MainReason modal_reason(const ItemVotes& v) {
  std::map<MainReason, std::size_t> tally;
  for (std::size_t i = 0; i < v.yes.size(); ++i)
    if (v.yes[i]) ++tally[v.reasons[i]];
  MainReason best = MainReason::NoneUnclear;
  std::size_t best_count = 0;
  for (auto r : kAllReasons) {
    if (tally[r] > best_count) {
      best = r;
      best_count = tally[r];
    }
  }
  return best;
}

OJson cell_json(const RateCell& c) {
  return OJson{{"k", c.count.successes}, {"n", c.count.trials}, {"rate", c.count.rate()}, {"ci", {c.ci.lo, c.ci.hi}}};
}

OJson opt_cell_json(const std::optional<RateCell>& c) { return c ? cell_json(*c) : OJson(nullptr); }

OJson opt_json(const std::optional<double>& v) { return v ? OJson(*v) : OJson(nullptr); }

OJson rates_json(const StrategyRates& r) {
  return OJson{{"strategy", to_string(r.strategy)},
               {"overall", cell_json(r.overall)},
               {"failed", opt_cell_json(r.failed)},
               {"succeeded", opt_cell_json(r.succeeded)}};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string percent(std::size_t k, std::size_t n) { return fmt("%.1f%%", 100.0 * static_cast<double>(k) / static_cast<double>(n)); }

std::string ci_text(const stats::Interval& ci) { return "[" + fmt("%.2f", ci.lo) + ", " + fmt("%.2f", ci.hi) + "]"; }

std::string display_name(Strategy s) {
  switch (s) {
    case Strategy::Random: return "Random";
    case Strategy::Heuristic: return "Heuristic";
    case Strategy::Signal: return "Signal";
  }
  return "?";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string rstrip(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

// "*" marks a significant gain over Random, "+" over Heuristic.
std::string markers(const AnalysisReport& r, Strategy s, int stratum) {
  std::string out;
  for (const auto& f : r.fisher) {
    if (f.b != s) continue;
    const auto& p = stratum == 0 ? f.overall : stratum == 1 ? f.failed : f.succeeded;
    if (!p || *p >= 0.05) continue;
    const StrategyRates *ra = nullptr, *rb = nullptr;
    for (const auto& x : r.rates) {
      if (x.strategy == f.a) ra = &x;
      if (x.strategy == f.b) rb = &x;
    }
    const auto& ca = stratum == 0 ? std::optional<RateCell>(ra->overall) : stratum == 1 ? ra->failed : ra->succeeded;
    const auto& cb = stratum == 0 ? std::optional<RateCell>(rb->overall) : stratum == 1 ? rb->failed : rb->succeeded;
    if (cb->count.rate() <= ca->count.rate()) continue;
    if (f.a == Strategy::Random) out += "*";
    if (f.a == Strategy::Heuristic) out += "+";
  }
  return out;
}

std::string cell_text(const std::optional<RateCell>& c, const std::string& mark) {
  if (!c) return pad("-", 5) + pad("-", 9) + pad("-", 15);
  return pad(std::to_string(c->count.trials), 5) + pad(percent(c->count.successes, c->count.trials) + mark, 9) +
         pad(ci_text(c->ci), 15);
}

std::string reason_label(MainReason r) {
  switch (r) {
    case MainReason::ActionToolUse: return "Action/tool-use";
    case MainReason::Conversation: return "Conversation";
    case MainReason::ExternalSystem: return "External system";
    case MainReason::SuccessExemplar: return "Success exemplar";
    case MainReason::NoneUnclear: return "None/unclear";
    case MainReason::Other: return "Other";
  }
  return "?";
}

void render_rates(std::ostringstream& out, const AnalysisReport& r, const std::vector<StrategyRates>& rows,
                  bool with_markers) {
  out << rstrip(pad("", 12) + pad("Overall", 29) + pad("Failed (reward = 0)", 29) + "Successful (reward = 1)") << '\n';
  std::string head = pad("Strategy", 12);
  for (int i = 0; i < 3; ++i) head += pad("N", 5) + pad("Rate", 9) + pad("95% CI", 15);
  out << rstrip(head) << '\n';
  for (const auto& row : rows) {
    auto m = [&](int stratum) { return with_markers ? markers(r, row.strategy, stratum) : std::string(); };
    out << rstrip(pad(display_name(row.strategy), 12) + cell_text(row.overall, m(0)) + cell_text(row.failed, m(1)) +
                  cell_text(row.succeeded, m(2)))
        << '\n';
  }
}

}  // namespace

LabelExport parse_export(std::string_view jsonl) {
  LabelExport e;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  bool header = false;
  std::set<std::string> known;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = "export line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw AnnotationError(AnnotationError::Code::InvalidRequest, where + ex.what());
    }
    const auto type = j.value("type", "");
    if (!header) {
      if (type != "header") throw AnnotationError(AnnotationError::Code::InvalidRequest, where + "expected header");
      header = true;
      e.annotators = j.at("annotators").get<std::vector<std::string>>();
      for (const auto& ji : j.at("items")) {
        ExportItem it;
        it.trajectory_id = ji.at("trajectory_id").get<std::string>();
        it.blinded_id = ji.value("blinded_id", "");
        for (const auto& p : ji.at("provenance")) {
          auto s = strategy_from_string(p.at("strategy").get<std::string>());
          auto st = stream_from_string(p.value("stream", "n/a"));
          if (!s || !st) throw AnnotationError(AnnotationError::Code::InvalidRequest, where + "bad provenance");
          it.provenance.push_back({*s, *st});
        }
        if (ji.contains("reward") && !ji.at("reward").is_null()) it.reward = ji.at("reward").get<long long>();
        it.domain = ji.value("domain", "");
        if (ji.contains("activations")) it.activations = ji.at("activations").get<std::vector<std::string>>();
        known.insert(it.trajectory_id);
        e.items.push_back(std::move(it));
      }
      continue;
    }
    if (type != "label") throw AnnotationError(AnnotationError::Code::InvalidRequest, where + "expected label");
    ExportLabel l;
    l.annotator_id = j.at("annotator_id").get<std::string>();
    l.trajectory_id = j.at("trajectory_id").get<std::string>();
    const auto informative = j.at("informative").get<std::string>();
    if (informative != "YES" && informative != "NO")
      throw AnnotationError(AnnotationError::Code::InvalidCategory, where + "informative must be YES or NO");
    l.informative = informative == "YES";
    const auto reason = main_reason_from_string(j.at("main_reason").get<std::string>());
    if (!reason) throw AnnotationError(AnnotationError::Code::InvalidCategory, where + "unknown main_reason");
    l.main_reason = *reason;
    if (!known.contains(l.trajectory_id))
      throw AnnotationError(AnnotationError::Code::UnknownItem, where + "label for unlisted item " + l.trajectory_id);
    if (!seen.insert({l.annotator_id, l.trajectory_id}).second)
      throw AnnotationError(AnnotationError::Code::DuplicateLabel, where + "second label from " + l.annotator_id);
    e.labels.push_back(std::move(l));
  }
  if (!header) throw StatsError(StatsError::Code::MissingVotes, "export is empty");
  return e;
}

AnalysisReport compute_report(const LabelExport& e) {
  if (e.items.empty()) throw StatsError(StatsError::Code::MissingVotes, "export lists no items");
  if (e.annotators.empty()) throw StatsError(StatsError::Code::MissingVotes, "export lists no annotators");

  std::map<std::string, std::size_t> rater_index;
  for (std::size_t i = 0; i < e.annotators.size(); ++i) rater_index[e.annotators[i]] = i;
  std::map<std::string, std::vector<std::optional<ExportLabel>>> by_item;
  for (const auto& it : e.items) by_item[it.trajectory_id].resize(e.annotators.size());
  for (const auto& l : e.labels) {
    const auto r = rater_index.find(l.annotator_id);
    if (r == rater_index.end())
      throw AnnotationError(AnnotationError::Code::UnknownAnnotator, "label from unlisted annotator " + l.annotator_id);
    by_item[l.trajectory_id][r->second] = l;
  }

  std::vector<ItemVotes> votes;
  std::string missing;
  for (const auto& it : e.items) {
    ItemVotes v;
    v.item = &it;
    bool complete = true;
    for (const auto& l : by_item[it.trajectory_id]) {
      if (!l) {
        complete = false;
        break;
      }
      v.yes.push_back(l->informative);
      v.reasons.push_back(l->main_reason);
    }
    if (!complete) {
      missing += missing.empty() ? it.trajectory_id : ", " + it.trajectory_id;
      continue;
    }
    v.majority = stats::majority_vote(v.yes);
    v.reason = modal_reason(v);
    votes.push_back(std::move(v));
  }
  if (!missing.empty()) throw StatsError(StatsError::Code::MissingVotes, "items lacking a full set of labels: " + missing);

  AnalysisReport r;
  r.items = e.items.size();
  r.annotators = e.annotators;
  for (auto s : kStrategies)
    if (auto rates = strategy_rates(s, votes)) r.rates.push_back(*rates);

  for (std::size_t i = 0; i < r.rates.size(); ++i) {
    for (std::size_t j = i + 1; j < r.rates.size(); ++j) {
      const auto &a = r.rates[i], &b = r.rates[j];
      r.fisher.push_back({a.strategy, b.strategy, fisher(a.overall, b.overall), fisher(a.failed, b.failed),
                          fisher(a.succeeded, b.succeeded)});
    }
  }

  const auto random = std::find_if(r.rates.begin(), r.rates.end(),
                                   [](const auto& x) { return x.strategy == Strategy::Random; });
  if (random != r.rates.end()) {
    const std::size_t nf = random->failed ? random->failed->count.trials : 0;
    const std::size_t ns = random->succeeded ? random->succeeded->count.trials : 0;
    if (nf + ns > 0) {
      const double wf = static_cast<double>(nf) / static_cast<double>(nf + ns);
      r.reference_failed_weight = wf;
      for (const auto& row : r.rates) {
        std::vector<stats::Stratum> strata;
        if ((wf > 0.0 && !row.failed) || (wf < 1.0 && !row.succeeded)) continue;
        if (wf > 0.0) strata.push_back({row.failed->count, wf});
        if (wf < 1.0) strata.push_back({row.succeeded->count, 1.0 - wf});
        r.standardized[row.strategy] = stats::standardized_rate(strata);
      }
    }
  }

  std::map<std::string, BinomialCount> overall;
  for (const auto& row : r.rates) overall[std::string(to_string(row.strategy))] = row.overall.count;
  try {
    r.efficiency = stats::annotation_efficiency(overall);
  } catch (const StatsError& ex) {
    if (ex.code() != StatsError::Code::ZeroInformative) throw;
  }

  if (e.annotators.size() >= 2) {
    std::vector<std::vector<bool>> yes;
    for (const auto& v : votes) yes.push_back(v.yes);
    const auto m = stats::binary_matrix(yes);
    auto& a = r.informative_agreement;
    a.items = votes.size();
    a.ac1 = stats::gwet_ac1(m);
    a.kappa = stats::fleiss_kappa(m);
    a.indices = stats::prevalence_bias_indices(m);
    for (std::size_t i = 0; i < e.annotators.size(); ++i) {
      std::size_t k = 0;
      for (const auto& v : votes) k += v.yes[i] ? 1 : 0;
      a.rater_yes_rate[e.annotators[i]] = static_cast<double>(k) / static_cast<double>(votes.size());
    }

    stats::RatingMatrix reasons;
    for (auto c : kAllReasons) reasons.categories.emplace_back(to_string(c));
    for (const auto& v : votes) {
      if (!std::all_of(v.yes.begin(), v.yes.end(), [](bool b) { return b; })) continue;
      std::vector<std::size_t> row;
      for (auto c : v.reasons) row.push_back(static_cast<std::size_t>(c));
      reasons.ratings.push_back(std::move(row));
    }
    if (!reasons.ratings.empty())
      r.reason_agreement = ReasonAgreement{stats::gwet_ac1(reasons), stats::fleiss_kappa(reasons), reasons.items()};
  }

  for (const auto& row : r.rates) {
    ReasonDistribution d;
    d.strategy = row.strategy;
    for (auto c : kAllReasons) d.counts[c] = 0;
    for (const auto& v : votes) {
      if (!v.majority || !has_strategy(*v.item, row.strategy)) continue;
      ++d.informative;
      ++d.counts[v.reason];
    }
    r.reasons.push_back(std::move(d));
  }

  std::set<std::string> domains;
  for (const auto& it : e.items) domains.insert(it.domain);
  for (const auto& d : domains) {
    DomainRates dr;
    dr.domain = d;
    for (auto s : kStrategies)
      if (auto rates = strategy_rates(s, votes, &d)) dr.strategies.push_back(*rates);
    r.domains.push_back(std::move(dr));
  }
  return r;
}

OJson to_json(const AnalysisReport& r) {
  OJson rates = OJson::array();
  for (const auto& x : r.rates) rates.push_back(rates_json(x));
  OJson fisher_j = OJson::array();
  for (const auto& f : r.fisher) {
    fisher_j.push_back(OJson{{"a", to_string(f.a)},
                             {"b", to_string(f.b)},
                             {"overall", opt_json(f.overall)},
                             {"failed", opt_json(f.failed)},
                             {"succeeded", opt_json(f.succeeded)}});
  }
  OJson standardization = nullptr;
  if (r.reference_failed_weight) {
    OJson std_rates = OJson::object();
    for (const auto& [s, v] : r.standardized) std_rates[std::string(to_string(s))] = v;
    standardization = OJson{
        {"reference", {{"failed", *r.reference_failed_weight}, {"succeeded", 1.0 - *r.reference_failed_weight}}},
        {"rates", std_rates}};
  }
  OJson efficiency = nullptr;
  if (r.efficiency) {
    OJson lpi = OJson::object(), gains = OJson::object();
    for (const auto& [s, v] : r.efficiency->labels_per_informative) lpi[s] = v;
    for (const auto& [a, row] : r.efficiency->gains)
      for (const auto& [b, v] : row) gains[a][b] = v;
    efficiency = OJson{{"labels_per_informative", lpi}, {"gains", gains}};
  }
  const auto& ia = r.informative_agreement;
  OJson informative{{"items", ia.items},
                    {"ac1", ia.ac1.value},
                    {"ac1_degenerate", ia.ac1.single_category_degenerate},
                    {"kappa", ia.kappa.value},
                    {"kappa_degenerate", ia.kappa.single_category_degenerate},
                    {"prevalence_index", ia.indices.prevalence},
                    {"bias_index", ia.indices.bias},
                    {"rater_yes_rate", ia.rater_yes_rate}};
  OJson reason_agreement = nullptr;
  if (r.reason_agreement) {
    reason_agreement = OJson{{"items", r.reason_agreement->items},
                             {"ac1", r.reason_agreement->ac1.value},
                             {"ac1_degenerate", r.reason_agreement->ac1.single_category_degenerate},
                             {"kappa", r.reason_agreement->kappa.value},
                             {"kappa_degenerate", r.reason_agreement->kappa.single_category_degenerate}};
  }
  OJson reasons = OJson::array();
  for (const auto& d : r.reasons) {
    OJson counts = OJson::object();
    for (auto c : kAllReasons) counts[std::string(to_string(c))] = d.counts.at(c);
    reasons.push_back(OJson{{"strategy", to_string(d.strategy)}, {"informative", d.informative}, {"counts", counts}});
  }
  OJson domains = OJson::array();
  for (const auto& d : r.domains) {
    OJson rows = OJson::array();
    for (const auto& x : d.strategies) rows.push_back(rates_json(x));
    domains.push_back(OJson{{"domain", d.domain}, {"strategies", rows}});
  }
  return OJson{{"items", r.items},
               {"annotators", r.annotators},
               {"strategies", rates},
               {"fisher", fisher_j},
               {"standardization", standardization},
               {"efficiency", efficiency},
               {"agreement", {{"informative", informative}, {"main_reason", reason_agreement}}},
               {"reasons", reasons},
               {"domains", domains}};
}

std::string render_tables(const AnalysisReport& r) {
  std::ostringstream out;
  out << "Table 1. Informativeness rate by sampling strategy (majority vote)\n\n";
  render_rates(out, r, r.rates, true);
  out << "\nCI: Clopper-Pearson 95% interval. Fisher's exact test, two-sided.\n"
         "* significantly higher than Random (p < 0.05). + significantly higher than Heuristic (p < 0.05).\n\n";

  out << "Table 2. Main reason among developer-informative trajectories (majority vote)\n\n";
  std::string head = pad("Strategy (N)", 17);
  for (auto c : kAllReasons) head += pad(reason_label(c), 18);
  out << rstrip(head) << '\n';
  for (const auto& d : r.reasons) {
    std::string line = pad(display_name(d.strategy) + " (" + std::to_string(d.informative) + ")", 17);
    for (auto c : kAllReasons) {
      const auto k = d.counts.at(c);
      const auto share = d.informative == 0 ? std::string("-") : percent(k, d.informative);
      line += pad(std::to_string(k) + " (" + share + ")", 18);
    }
    out << rstrip(line) << '\n';
  }
  return out.str();
}

std::string render_report(const AnalysisReport& r) {
  std::ostringstream out;
  out << render_tables(r);

  out << "\nStandardized rates";
  if (r.reference_failed_weight) {
    out << " (reference mix: " << fmt("%.1f%%", 100.0 * *r.reference_failed_weight) << " failed, "
        << fmt("%.1f%%", 100.0 * (1.0 - *r.reference_failed_weight)) << " successful)\n";
    for (const auto& [s, v] : r.standardized) out << "  " << pad(display_name(s), 11) << fmt("%.1f%%", 100.0 * v) << '\n';
  } else {
    out << ": unavailable without a random sample carrying rewards\n";
  }

  out << "\nAnnotation efficiency\n";
  if (r.efficiency) {
    for (auto s : kStrategies) {
      const auto it = r.efficiency->labels_per_informative.find(std::string(to_string(s)));
      if (it == r.efficiency->labels_per_informative.end()) continue;
      out << "  " << pad(display_name(s), 11) << fmt("%.2f", it->second) << " labels per informative trajectory\n";
    }
    for (const auto& [a, row] : r.efficiency->gains)
      for (const auto& [b, v] : row)
        if (v > 1.0) out << "  " << a << " over " << b << ": " << fmt("%.2f", v) << "x\n";
  } else {
    out << "  unavailable: a strategy has no informative trajectories\n";
  }

  out << "\nFisher exact tests (two-sided)\n";
  for (const auto& f : r.fisher) {
    auto p = [](const std::optional<double>& v) { return v ? fmt("%.4g", *v) : std::string("-"); };
    out << "  " << pad(display_name(f.a) + " vs " + display_name(f.b), 24) << "overall p=" << p(f.overall)
        << "  failed p=" << p(f.failed) << "  successful p=" << p(f.succeeded) << '\n';
  }

  const auto& ia = r.informative_agreement;
  out << "\nAgreement on informativeness (" << ia.items << " items, " << r.annotators.size() << " raters)\n";
  out << "  Gwet AC1 " << fmt("%.3f", ia.ac1.value) << (ia.ac1.single_category_degenerate ? " (single category)" : "")
      << "  Fleiss kappa " << fmt("%.3f", ia.kappa.value)
      << (ia.kappa.single_category_degenerate ? " (single category)" : "") << '\n';
  out << "  prevalence index " << fmt("%.2f", ia.indices.prevalence) << "  bias index "
      << fmt("%.2f", ia.indices.bias) << '\n';
  for (const auto& [a, v] : ia.rater_yes_rate) out << "  " << pad(a, 12) << "YES rate " << fmt("%.2f", v) << '\n';
  if (r.reason_agreement) {
    out << "Agreement on main reason (" << r.reason_agreement->items << " items all raters called informative)\n"
        << "  Gwet AC1 " << fmt("%.3f", r.reason_agreement->ac1.value) << "  Fleiss kappa "
        << fmt("%.3f", r.reason_agreement->kappa.value) << '\n';
  }

  for (const auto& d : r.domains) {
    out << "\nDomain: " << (d.domain.empty() ? "(none)" : d.domain) << '\n';
    render_rates(out, r, d.strategies, false);
  }
  return out.str();
}

std::vector<std::string> check_against(const OJson& report, const nlohmann::json& golden) {
  std::vector<std::string> mismatches;
  const double default_tol = golden.value("tolerance", 0.0);
  const auto doc = nlohmann::json::parse(report.dump());
  for (const auto& [pointer, spec] : golden.at("values").items()) {
    nlohmann::json expected = spec;
    double tol = default_tol;
    if (spec.is_object() && spec.contains("value")) {
      expected = spec.at("value");
      tol = spec.value("tolerance", default_tol);
    }
    const nlohmann::json::json_pointer ptr(pointer);
    if (!doc.contains(ptr)) {
      mismatches.push_back(pointer + ": missing from report");
      continue;
    }
    const auto& actual = doc.at(ptr);
    bool ok;
    if (expected.is_number() && actual.is_number())
      ok = std::fabs(actual.get<double>() - expected.get<double>()) <= tol;
    else
      ok = actual == expected;
    if (!ok) mismatches.push_back(pointer + ": expected " + expected.dump() + ", got " + actual.dump());
  }
  return mismatches;
}

}  // namespace trajsig
