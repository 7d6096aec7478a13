// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trajsig::stats {

class StatsError : public std::invalid_argument {
 public:
  enum class Code {
    InvalidCount,
    InvalidAlpha,
    DegenerateTable,
    EvenRaterCount,
    MissingVotes,
    InvalidMatrix,
    WeightsDontSumToOne,
    ZeroInformative,
  };
  StatsError(Code code, const std::string& message) : std::invalid_argument(message), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

std::string_view to_string(StatsError::Code c);

struct BinomialCount {
  std::size_t successes = 0;
  std::size_t trials = 0;

  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials); }
  bool operator==(const BinomialCount&) const = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact two-sided interval from Beta quantiles.
Interval clopper_pearson(BinomialCount c, double alpha = 0.05);

/// Two-sided Fisher exact test on [[a, b], [c, d]], summing the probabilities
/// of every table with the observed margins that is no more likely than the
/// observed one (relative tolerance 1e-7).
double fisher_exact_two_sided(std::size_t a, std::size_t b, std::size_t c, std::size_t d);

/// YES iff at least ceil(R/2) of an odd number R of raters say YES.
bool majority_vote(const std::vector<bool>& labels);

/// Items x raters table of category indices into `categories`.
struct RatingMatrix {
  std::vector<std::string> categories;
  std::vector<std::vector<std::size_t>> ratings;

  std::size_t items() const { return ratings.size(); }
  std::size_t raters() const { return ratings.empty() ? 0 : ratings.front().size(); }
  void validate() const;
};

RatingMatrix binary_matrix(const std::vector<std::vector<bool>>& yes);

struct Agreement {
  double value = 0.0;
  // Every cell carried the same label; value is reported as 1.
  bool single_category_degenerate = false;
};

/// k = number of YES votes over `ids`, n = |ids|. Throws MissingVotes naming
/// every id without a vote.
BinomialCount informativeness_rate(const std::vector<std::string>& ids, const std::map<std::string, bool>& votes);

/// Multi-rater AC1: pairwise observed agreement against chance agreement
/// sum_q pi_q (1 - pi_q) / (Q - 1), with Q the size of the category set.
Agreement gwet_ac1(const RatingMatrix& m);
Agreement fleiss_kappa(const RatingMatrix& m);

struct PrevalenceBias {
  double prevalence = 0.0;
  double bias = 0.0;
};

/// Pairwise |P(both yes) - P(both no)| and |P(yes_i) - P(yes_j)|, averaged
/// over all unordered rater pairs. Category index 1 is YES.
PrevalenceBias prevalence_bias_indices(const RatingMatrix& m);

struct Stratum {
  BinomialCount count;
  double weight = 0.0;
};

/// Weighted sum of stratum rates; weights must be non-negative and sum to 1
/// within 1e-9.
double standardized_rate(const std::vector<Stratum>& strata);

struct Efficiency {
  std::map<std::string, double> labels_per_informative;
  // gains[a][b] = cost(b) / cost(a): how much cheaper a is than b.
  std::map<std::string, std::map<std::string, double>> gains;
};

Efficiency annotation_efficiency(const std::map<std::string, BinomialCount>& rates);

}  // namespace trajsig::stats
