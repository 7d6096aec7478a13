// SPDX-License-Identifier: Apache-2.0
#include "trajsig/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/beta.hpp>

namespace trajsig::stats {

namespace {

double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

struct Tallies {
  std::vector<std::vector<std::size_t>> per_item;  // items x categories
  std::size_t raters = 0;
  bool single_category = true;
};

Tallies tally(const RatingMatrix& m) {
  m.validate();
  Tallies t;
  t.raters = m.raters();
  const auto first = m.ratings.front().front();
  for (const auto& row : m.ratings) {
    std::vector<std::size_t> counts(m.categories.size(), 0);
    for (auto label : row) {
      ++counts[label];
      if (label != first) t.single_category = false;
    }
    t.per_item.push_back(std::move(counts));
  }
  return t;
}

double pairwise_observed_agreement(const Tallies& t) {
  const double r = static_cast<double>(t.raters);
  double total = 0.0;
  for (const auto& counts : t.per_item) {
    double agree = 0.0;
    for (auto c : counts) agree += static_cast<double>(c) * (static_cast<double>(c) - 1.0);
    total += agree / (r * (r - 1.0));
  }
  return total / static_cast<double>(t.per_item.size());
}

std::vector<double> category_prevalence(const Tallies& t, std::size_t categories) {
  std::vector<double> p(categories, 0.0);
  for (const auto& counts : t.per_item)
    for (std::size_t q = 0; q < categories; ++q)
      p[q] += static_cast<double>(counts[q]) / static_cast<double>(t.raters);
  for (auto& v : p) v /= static_cast<double>(t.per_item.size());
  return p;
}

}  // namespace

std::string_view to_string(StatsError::Code c) {
  switch (c) {
    case StatsError::Code::InvalidCount: return "InvalidCount";
    case StatsError::Code::InvalidAlpha: return "InvalidAlpha";
    case StatsError::Code::DegenerateTable: return "DegenerateTable";
    case StatsError::Code::EvenRaterCount: return "EvenRaterCount";
    case StatsError::Code::MissingVotes: return "MissingVotes";
    case StatsError::Code::InvalidMatrix: return "InvalidMatrix";
    case StatsError::Code::WeightsDontSumToOne: return "WeightsDontSumToOne";
    case StatsError::Code::ZeroInformative: return "ZeroInformative";
  }
  return "Unknown";
}

Interval clopper_pearson(BinomialCount c, double alpha) {
  if (c.trials == 0 || c.successes > c.trials)
    throw StatsError(StatsError::Code::InvalidCount, "clopper_pearson needs 0 <= k <= n and n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw StatsError(StatsError::Code::InvalidAlpha, "alpha must lie strictly between 0 and 1");
  const double k = static_cast<double>(c.successes);
  const double n = static_cast<double>(c.trials);
  Interval ci;
  ci.lo = c.successes == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  ci.hi = c.successes == c.trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return ci;
}

double fisher_exact_two_sided(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  const std::size_t row1 = a + b, row2 = c + d, col1 = a + c, col2 = b + d;
  if (row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0)
    throw StatsError(StatsError::Code::DegenerateTable, "Fisher test needs non-zero margins");
  const std::size_t total = row1 + row2;
  const double log_denominator = log_choose(total, col1);
  auto log_p = [&](std::size_t x) {
    return log_choose(row1, x) + log_choose(row2, col1 - x) - log_denominator;
  };
  const std::size_t lo = col1 > row2 ? col1 - row2 : 0;
  const std::size_t hi = std::min(row1, col1);
  const double observed = log_p(a);
  double p = 0.0;
  for (std::size_t x = lo; x <= hi; ++x) {
    const double lp = log_p(x);
    if (lp <= observed + 1e-7) p += std::exp(lp);
  }
  return std::min(p, 1.0);
}

bool majority_vote(const std::vector<bool>& labels) {
  if (labels.empty() || labels.size() % 2 == 0)
    throw StatsError(StatsError::Code::EvenRaterCount, "majority vote needs an odd number of raters");
  const auto yes = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  return yes >= (labels.size() + 1) / 2;
}

BinomialCount informativeness_rate(const std::vector<std::string>& ids, const std::map<std::string, bool>& votes) {
  BinomialCount c{0, ids.size()};
  std::string missing;
  for (const auto& id : ids) {
    auto it = votes.find(id);
    if (it == votes.end()) {
      missing += missing.empty() ? id : ", " + id;
      continue;
    }
    c.successes += it->second ? 1 : 0;
  }
  if (!missing.empty()) throw StatsError(StatsError::Code::MissingVotes, "no majority vote for: " + missing);
  return c;
}

void RatingMatrix::validate() const {
  if (categories.size() < 2)
    throw StatsError(StatsError::Code::InvalidMatrix, "rating matrix needs at least two categories");
  if (ratings.empty()) throw StatsError(StatsError::Code::InvalidMatrix, "rating matrix has no items");
  const auto r = ratings.front().size();
  if (r < 2) throw StatsError(StatsError::Code::InvalidMatrix, "rating matrix needs at least two raters");
  for (const auto& row : ratings) {
    if (row.size() != r)
      throw StatsError(StatsError::Code::InvalidMatrix, "every item must carry one label per rater");
    for (auto label : row)
      if (label >= categories.size())
        throw StatsError(StatsError::Code::InvalidMatrix, "label outside the category set");
  }
}

RatingMatrix binary_matrix(const std::vector<std::vector<bool>>& yes) {
  RatingMatrix m;
  m.categories = {"NO", "YES"};
  for (const auto& row : yes) {
    std::vector<std::size_t> r;
    for (bool v : row) r.push_back(v ? 1 : 0);
    m.ratings.push_back(std::move(r));
  }
  return m;
}

Agreement gwet_ac1(const RatingMatrix& m) {
  const auto t = tally(m);
  if (t.single_category) return {1.0, true};
  const double pa = pairwise_observed_agreement(t);
  const auto pi = category_prevalence(t, m.categories.size());
  double pe = 0.0;
  for (double p : pi) pe += p * (1.0 - p);
  pe /= static_cast<double>(m.categories.size() - 1);
  return {(pa - pe) / (1.0 - pe), false};
}

Agreement fleiss_kappa(const RatingMatrix& m) {
  const auto t = tally(m);
  if (t.single_category) return {1.0, true};
  const double pbar = pairwise_observed_agreement(t);
  const auto p = category_prevalence(t, m.categories.size());
  double pe = 0.0;
  for (double v : p) pe += v * v;
  return {(pbar - pe) / (1.0 - pe), false};
}

PrevalenceBias prevalence_bias_indices(const RatingMatrix& m) {
  m.validate();
  if (m.categories.size() != 2)
    throw StatsError(StatsError::Code::InvalidMatrix, "prevalence/bias indices need binary labels");
  const std::size_t raters = m.raters();
  const double n = static_cast<double>(m.items());
  PrevalenceBias out;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < raters; ++i) {
    for (std::size_t j = i + 1; j < raters; ++j) {
      double both_yes = 0, both_no = 0, yes_i = 0, yes_j = 0;
      for (const auto& row : m.ratings) {
        const bool a = row[i] == 1, b = row[j] == 1;
        both_yes += a && b;
        both_no += !a && !b;
        yes_i += a;
        yes_j += b;
      }
      out.prevalence += std::fabs(both_yes - both_no) / n;
      out.bias += std::fabs(yes_i - yes_j) / n;
      ++pairs;
    }
  }
  out.prevalence /= static_cast<double>(pairs);
  out.bias /= static_cast<double>(pairs);
  return out;
}

double standardized_rate(const std::vector<Stratum>& strata) {
  double total_weight = 0.0, rate = 0.0;
  for (const auto& s : strata) {
    if (s.weight < 0.0)
      throw StatsError(StatsError::Code::WeightsDontSumToOne, "stratum weights must be non-negative");
    if (s.count.trials == 0 && s.weight > 0.0)
      throw StatsError(StatsError::Code::InvalidCount, "weighted stratum has no trials");
    total_weight += s.weight;
    rate += s.weight * s.count.rate();
  }
  if (std::fabs(total_weight - 1.0) > 1e-9)
    throw StatsError(StatsError::Code::WeightsDontSumToOne, "stratum weights must sum to 1");
  return rate;
}

Efficiency annotation_efficiency(const std::map<std::string, BinomialCount>& rates) {
  Efficiency e;
  for (const auto& [name, c] : rates) {
    if (c.successes == 0)
      throw StatsError(StatsError::Code::ZeroInformative, "strategy '" + name + "' has no informative items");
    e.labels_per_informative[name] = static_cast<double>(c.trials) / static_cast<double>(c.successes);
  }
  for (const auto& [a, cost_a] : e.labels_per_informative)
    for (const auto& [b, cost_b] : e.labels_per_informative)
      if (a != b) e.gains[a][b] = cost_b / cost_a;
  return e;
}

}  // namespace trajsig::stats
