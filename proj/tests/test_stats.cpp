// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "trajsig/stats.hpp"

using namespace trajsig;
using namespace trajsig::stats;

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

StatsError::Code code_of(auto&& f) {
  try {
    f();
  } catch (const StatsError& e) {
    return e.code();
  }
  FAIL("expected StatsError");
  return StatsError::Code::InvalidCount;
}

RatingMatrix yn(const std::vector<std::string>& rows) {
  std::vector<std::vector<bool>> yes;
  for (const auto& r : rows) {
    std::vector<bool> row;
    for (char c : r) row.push_back(c == 'Y');
    yes.push_back(row);
  }
  return binary_matrix(yes);
}

RatingMatrix random_matrix(std::mt19937_64& rng, std::size_t cats) {
  RatingMatrix m;
  for (std::size_t c = 0; c < cats; ++c) m.categories.push_back("c" + std::to_string(c));
  const auto items = 1 + rng() % 12, raters = 2 + rng() % 4;
  for (std::size_t i = 0; i < items; ++i) {
    std::vector<std::size_t> row;
    for (std::size_t r = 0; r < raters; ++r) row.push_back(rng() % cats);
    m.ratings.push_back(row);
  }
  return m;
}

}  // namespace

TEST_CASE("clopper_pearson examples") {
  struct Case {
    std::size_t k, n;
    double lo, hi;
  };
  for (const auto& c : std::vector<Case>{{54, 100, .44, .64}, {74, 100, .64, .82}, {82, 100, .73, .89},
                                         {28, 37, .59, .88}, {59, 70, .74, .92}, {50, 52, .87, 1.0},
                                         {26, 63, .29, .54}, {15, 30, .31, .69}, {32, 48, .52, .80}}) {
    const auto iv = clopper_pearson({c.k, c.n});
    CHECK_MESSAGE(round2(iv.lo) == doctest::Approx(c.lo), c.k << "/" << c.n);
    CHECK_MESSAGE(round2(iv.hi) == doctest::Approx(c.hi), c.k << "/" << c.n);
  }
  const auto zero = clopper_pearson({0, 10});
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == doctest::Approx(1.0 - std::pow(0.025, 0.1)).epsilon(1e-9));
  CHECK(zero.hi == doctest::Approx(0.3085).epsilon(1e-3));
  const auto full = clopper_pearson({7, 7});
  CHECK(full.hi == 1.0);
  CHECK(full.lo == doctest::Approx(std::pow(0.025, 1.0 / 7)).epsilon(1e-9));
}

TEST_CASE("clopper_pearson errors") {
  CHECK(code_of([] { clopper_pearson({3, 2}); }) == StatsError::Code::InvalidCount);
  CHECK(code_of([] { clopper_pearson({0, 0}); }) == StatsError::Code::InvalidCount);
  CHECK(code_of([] { clopper_pearson({1, 2}, 0.0); }) == StatsError::Code::InvalidAlpha);
  CHECK(code_of([] { clopper_pearson({1, 2}, 1.0); }) == StatsError::Code::InvalidAlpha);
}

TEST_CASE("property: clopper_pearson agrees with the tail-sum oracle and is monotone") {
  for (std::size_t n : {1u, 2u, 5u, 13u, 37u, 52u, 100u, 250u}) {
    double prev_lo = -1, prev_hi = -1;
    for (std::size_t k = 0; k <= n; ++k) {
      for (double alpha : {0.05, 0.1, 0.01}) {
        const auto iv = clopper_pearson({k, n}, alpha);
        const auto ref = oracle::clopper_pearson(k, n, alpha);
        CHECK(iv.lo == doctest::Approx(ref.lo).epsilon(1e-7));
        CHECK(iv.hi == doctest::Approx(ref.hi).epsilon(1e-7));
        const double p = static_cast<double>(k) / static_cast<double>(n);
        CHECK(iv.lo <= p);
        CHECK(p <= iv.hi);
      }
      const auto iv = clopper_pearson({k, n});
      CHECK(iv.lo >= prev_lo);
      CHECK(iv.hi >= prev_hi);
      prev_lo = iv.lo;
      prev_hi = iv.hi;
      if (k == 0) CHECK(iv.lo == 0.0);
      if (k == n) CHECK(iv.hi == 1.0);
    }
  }
}

TEST_CASE("fisher examples") {
  CHECK(fisher_exact_two_sided(82, 18, 54, 46) < 0.001);
  CHECK(fisher_exact_two_sided(82, 18, 54, 46) == doctest::Approx(3.497e-5).epsilon(1e-2));
  CHECK(fisher_exact_two_sided(82, 18, 74, 26) == doctest::Approx(0.232).epsilon(0.01 / 0.232));
  CHECK(fisher_exact_two_sided(5, 5, 5, 5) == doctest::Approx(1.0));
  CHECK(fisher_exact_two_sided(50, 2, 59, 11) == doctest::Approx(0.0409).epsilon(1e-2));
  CHECK(fisher_exact_two_sided(32, 16, 26, 37) == doctest::Approx(0.01232).epsilon(1e-2));
  CHECK(code_of([] { fisher_exact_two_sided(0, 0, 3, 4); }) == StatsError::Code::DegenerateTable);
  CHECK(code_of([] { fisher_exact_two_sided(0, 3, 0, 4); }) == StatsError::Code::DegenerateTable);
}

TEST_CASE("property: fisher matches enumeration and its symmetries") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 600; ++i) {
    const std::size_t a = rng() % 30, b = rng() % 30, c = rng() % 30, d = rng() % 30;
    if (a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0) continue;
    const double p = fisher_exact_two_sided(a, b, c, d);
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    CHECK(p == doctest::Approx(oracle::fisher_two_sided(a, b, c, d)).epsilon(1e-9));
    CHECK(fisher_exact_two_sided(c, d, a, b) == doctest::Approx(p).epsilon(1e-12));
    CHECK(fisher_exact_two_sided(b, a, d, c) == doctest::Approx(p).epsilon(1e-12));
    CHECK(fisher_exact_two_sided(a, c, b, d) == doctest::Approx(p).epsilon(1e-12));
    const std::size_t s = 1 + rng() % 4;
    if (a > 0 && b > 0) CHECK(fisher_exact_two_sided(a, b, a * s, b * s) == doctest::Approx(1.0));
  }
}

TEST_CASE("majority vote") {
  CHECK(majority_vote({true, true, false}));
  CHECK_FALSE(majority_vote({false, false, false}));
  CHECK_FALSE(majority_vote({true, false, false}));
  CHECK(majority_vote({true}));
  CHECK(majority_vote({true, true, true, false, false}));
  CHECK(code_of([] { majority_vote({true, false}); }) == StatsError::Code::EvenRaterCount);
  CHECK(code_of([] { majority_vote({}); }) == StatsError::Code::EvenRaterCount);
}

TEST_CASE("informativeness rate") {
  std::vector<std::string> ids;
  std::map<std::string, bool> votes;
  for (int i = 0; i < 100; ++i) {
    ids.push_back("t" + std::to_string(i));
    votes[ids.back()] = i < 82;
  }
  const auto r = informativeness_rate(ids, votes);
  CHECK(r == BinomialCount{82, 100});
  CHECK(r.rate() == doctest::Approx(0.82));
  for (auto& [id, v] : votes) v = false;
  CHECK(informativeness_rate(ids, votes) == BinomialCount{0, 100});

  votes.erase("t3");
  votes.erase("t7");
  try {
    informativeness_rate(ids, votes);
    FAIL("expected MissingVotes");
  } catch (const StatsError& e) {
    CHECK(e.code() == StatsError::Code::MissingVotes);
    CHECK(std::string(e.what()).find("t3") != std::string::npos);
    CHECK(std::string(e.what()).find("t7") != std::string::npos);
  }
}

TEST_CASE("agreement fixtures") {
  const auto perfect = yn({"YYY", "NNN", "YYY", "YYY"});
  CHECK(gwet_ac1(perfect).value == 1.0);
  CHECK(fleiss_kappa(perfect).value == 1.0);
  CHECK_FALSE(gwet_ac1(perfect).single_category_degenerate);

  const auto uniform = yn({"YYY", "YYY"});
  CHECK(gwet_ac1(uniform).value == 1.0);
  CHECK(gwet_ac1(uniform).single_category_degenerate);
  CHECK(fleiss_kappa(uniform).single_category_degenerate);

  // Observed agreement 2/3, YES prevalence 1/2: both chance terms are 1/2.
  const auto four = yn({"YYY", "YYN", "NNN", "YNN"});
  CHECK(gwet_ac1(four).value == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(fleiss_kappa(four).value == doctest::Approx(1.0 / 3).epsilon(1e-9));

  // Skewed prevalence: Pa = 28/30, pi_yes = 29/30.
  // kappa = (840 - 842) / (900 - 842) = -1/29; AC1 = (840 - 58) / (900 - 58) = 391/421.
  const auto skewed = yn({"YYY", "YYY", "YYY", "YYY", "YYY", "YYY", "YYY", "YYY", "YYY", "YYN"});
  const double k = fleiss_kappa(skewed).value, ac1 = gwet_ac1(skewed).value;
  CHECK(k == doctest::Approx(-1.0 / 29).epsilon(1e-9));
  CHECK(ac1 == doctest::Approx(391.0 / 421).epsilon(1e-9));
  CHECK(k < ac1);

  const auto balanced = yn({"YY", "YN", "NY", "NN"});
  CHECK(std::abs(fleiss_kappa(balanced).value) < 1e-12);

  const auto opposed = yn({"YN", "NY"});
  CHECK(gwet_ac1(opposed).value < 0.0);
  CHECK(gwet_ac1(opposed).value == doctest::Approx(-1.0));
}

TEST_CASE("rating matrix validation") {
  RatingMatrix m;
  m.categories = {"no", "yes"};
  CHECK(code_of([&] { gwet_ac1(m); }) == StatsError::Code::InvalidMatrix);
  m.ratings = {{0}};
  CHECK(code_of([&] { gwet_ac1(m); }) == StatsError::Code::InvalidMatrix);
  m.ratings = {{0, 1}, {0}};
  CHECK(code_of([&] { fleiss_kappa(m); }) == StatsError::Code::InvalidMatrix);
  m.ratings = {{0, 2}};
  CHECK(code_of([&] { fleiss_kappa(m); }) == StatsError::Code::InvalidMatrix);
  m.categories = {"a", "b", "c"};
  CHECK(code_of([&] { prevalence_bias_indices(m); }) == StatsError::Code::InvalidMatrix);
}

TEST_CASE("property: agreement matches the textbook oracle and is invariant to relabelling") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 500; ++i) {
    const std::size_t cats = 2 + rng() % 5;
    const auto m = random_matrix(rng, cats);
    const auto ac1 = gwet_ac1(m), kappa = fleiss_kappa(m);
    if (!ac1.single_category_degenerate) {
      CHECK(ac1.value == doctest::Approx(oracle::gwet_ac1(m.ratings, cats)).epsilon(1e-9));
      CHECK(kappa.value == doctest::Approx(oracle::fleiss_kappa(m.ratings, cats)).epsilon(1e-9));
    }
    CHECK(ac1.value >= -1.0 - 1e-12);
    CHECK(ac1.value <= 1.0 + 1e-12);

    std::vector<std::size_t> rename(cats);
    std::iota(rename.begin(), rename.end(), 0);
    std::shuffle(rename.begin(), rename.end(), rng);
    std::vector<std::size_t> cols(m.raters());
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    RatingMatrix p = m;
    for (std::size_t it = 0; it < m.items(); ++it)
      for (std::size_t r = 0; r < m.raters(); ++r) p.ratings[it][r] = rename[m.ratings[it][cols[r]]];
    CHECK(gwet_ac1(p).value == doctest::Approx(ac1.value).epsilon(1e-12));
    CHECK(fleiss_kappa(p).value == doctest::Approx(kappa.value).epsilon(1e-12));

    // Perfect agreement on the same items.
    RatingMatrix agree = m;
    for (auto& row : agree.ratings) std::fill(row.begin(), row.end(), row.front());
    CHECK(gwet_ac1(agree).value == 1.0);
    CHECK(fleiss_kappa(agree).value == 1.0);
  }
}

TEST_CASE("prevalence and bias indices") {
  const auto all_yes = yn({"YYY", "YYY"});
  CHECK(prevalence_bias_indices(all_yes).prevalence == doctest::Approx(1.0));
  CHECK(prevalence_bias_indices(all_yes).bias == doctest::Approx(0.0));

  // Rater YES rates 0.74 and 0.57 with maximal overlap: 57 both yes, 26 both no.
  std::vector<std::vector<bool>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({i < 74, i < 57});
  const auto pb = prevalence_bias_indices(binary_matrix(rows));
  CHECK(pb.bias == doctest::Approx(0.17).epsilon(1e-12));
  CHECK(pb.prevalence == doctest::Approx(0.31).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto m = random_matrix(rng, 2);
    const auto base = prevalence_bias_indices(m);
    for (auto& row : m.ratings) std::reverse(row.begin(), row.end());
    CHECK(prevalence_bias_indices(m).prevalence == doctest::Approx(base.prevalence).epsilon(1e-12));
    CHECK(prevalence_bias_indices(m).bias == doctest::Approx(base.bias).epsilon(1e-12));
    for (auto& row : m.ratings) std::rotate(row.begin(), row.begin() + 1, row.end());
    CHECK(prevalence_bias_indices(m).bias == doctest::Approx(base.bias).epsilon(1e-12));
  }
}

TEST_CASE("standardized rate") {
  const double signal = standardized_rate({{{50, 52}, 0.37}, {{32, 48}, 0.63}});
  CHECK(signal == doctest::Approx(0.776).epsilon(0.002 / 0.776));
  CHECK(std::abs(signal * 100 - 77.6) <= 0.2);
  const double heuristic = standardized_rate({{{59, 70}, 0.37}, {{15, 30}, 0.63}});
  CHECK(std::abs(heuristic * 100 - 62.7) <= 0.2);
  const double random = standardized_rate({{{28, 37}, 0.37}, {{26, 63}, 0.63}});
  CHECK(random == doctest::Approx(0.54).epsilon(1e-12));

  CHECK(code_of([] { standardized_rate({{{1, 2}, 0.5}, {{1, 2}, 0.4}}); }) ==
        StatsError::Code::WeightsDontSumToOne);
  CHECK(code_of([] { standardized_rate({{{1, 2}, 1.5}, {{1, 2}, -0.5}}); }) ==
        StatsError::Code::WeightsDontSumToOne);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const auto strata = 1 + rng() % 4;
    std::vector<Stratum> s;
    double total = 0;
    for (std::size_t j = 0; j < strata; ++j) {
      const std::size_t n = 1 + rng() % 50;
      s.push_back({{rng() % (n + 1), n}, static_cast<double>(1 + rng() % 10)});
      total += s.back().weight;
    }
    double lo = 1, hi = 0;
    for (auto& x : s) {
      x.weight /= total;
      lo = std::min(lo, x.count.rate());
      hi = std::max(hi, x.count.rate());
    }
    const double r = standardized_rate(s);
    CHECK(r >= lo - 1e-12);
    CHECK(r <= hi + 1e-12);
    for (auto& x : s) x.count = {3, 4};
    CHECK(standardized_rate(s) == doctest::Approx(0.75));
  }
}

TEST_CASE("annotation efficiency") {
  const auto e = annotation_efficiency({{"signal", {82, 100}}, {"heuristic", {74, 100}}, {"random", {54, 100}}});
  CHECK(std::abs(e.labels_per_informative.at("signal") - 1.22) <= 0.005);
  CHECK(std::abs(e.labels_per_informative.at("heuristic") - 1.35) <= 0.005);
  CHECK(std::abs(e.labels_per_informative.at("random") - 1.85) <= 0.005);
  CHECK(std::abs(e.gains.at("signal").at("random") - 1.52) <= 0.01);
  CHECK(e.gains.at("signal").at("random") == doctest::Approx(82.0 / 54.0));
  CHECK(e.gains.at("random").at("signal") == doctest::Approx(54.0 / 82.0));
  CHECK(code_of([] { annotation_efficiency({{"x", {0, 10}}}); }) == StatsError::Code::ZeroInformative);
}
