#include "doctest.h"

#include <cmath>

#include "clinnote/csv.hpp"
#include "clinnote/stats.hpp"
#include "support.hpp"

using namespace clinnote;
using namespace clinnote::stats;

namespace {

struct Sample {
  std::vector<double> x;
  std::vector<int> y;
};

Sample logit500() {
  const auto t = csv::Table::read(testing::oracle("logit500.csv"));
  Sample s;
  for (const auto& r : t.rows()) {
    s.x.push_back(std::stod(r.fields[0]));
    s.y.push_back(std::stoi(r.fields[1]));
  }
  return s;
}

Sample random_sample(testing::Gen& g, int n, double b0, double b1) {
  Sample s;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    s.x.push_back(x);
    s.y.push_back(g.coin(1.0 / (1.0 + std::exp(-(b0 + b1 * x)))) ? 1 : 0);
  }
  // both classes present
  s.y[0] = 0;
  s.y[1] = 1;
  return s;
}

ContingencyTable table(std::vector<std::array<long, 2>> counts) {
  ContingencyTable t;
  for (size_t i = 0; i < counts.size(); ++i) t.rows.push_back("r" + std::to_string(i));
  t.counts = std::move(counts);
  return t;
}

// Pearson statistic straight from the definition.
double pearson(const std::vector<std::array<long, 2>>& c) {
  double n = 0, col[2] = {0, 0};
  std::vector<double> row;
  for (const auto& r : c) {
    row.push_back(static_cast<double>(r[0] + r[1]));
    col[0] += static_cast<double>(r[0]);
    col[1] += static_cast<double>(r[1]);
  }
  n = col[0] + col[1];
  double s = 0;
  for (size_t i = 0; i < c.size(); ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / n;
      if (e > 0) s += (static_cast<double>(c[i][static_cast<size_t>(j)]) - e) * (static_cast<double>(c[i][static_cast<size_t>(j)]) - e) / e;
    }
  return s;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("normal and chi-square tails") {
    CHECK(normal_two_sided_p(0.0) == doctest::Approx(1.0));
    CHECK(std::abs(normal_two_sided_p(1.0) - 0.31731050786291415) < 1e-12);
    CHECK(std::abs(normal_two_sided_p(-1.959963984540054) - 0.05) < 1e-12);
    // scipy.stats.chi2.sf
    CHECK(std::abs(chi2_sf(3.5, 4) - 0.477878344488724) < 1e-10);
    CHECK(std::abs(chi2_sf(0.01, 1) - 0.920344325445942) < 1e-10);
    CHECK(std::abs(chi2_sf(150, 100) - 0.0009039320423540184) < 1e-12);
    CHECK(chi2_sf(0.0, 3) == 1.0);
    CHECK_THROWS_AS(chi2_sf(1.0, 0), InvalidInput);
    CHECK_THROWS_AS(regularized_gamma_q(0.0, 1.0), InvalidInput);
    CHECK_THROWS_AS(regularized_gamma_q(1.0, -1.0), InvalidInput);
    // Q(1, x) = exp(-x)
    for (double x : {0.1, 1.0, 5.0, 30.0}) CHECK(std::abs(regularized_gamma_q(1.0, x) - std::exp(-x)) < 1e-14);
  }

  TEST_CASE("tail function reproduces the critical-value table") {
    const auto t = csv::Table::read(testing::oracle("chi2_critical.csv"));
    REQUIRE(t.rows().size() == 20);
    for (const auto& r : t.rows()) {
      const double df = std::stod(r.fields[0]), p = std::stod(r.fields[1]), x = std::stod(r.fields[2]);
      CHECK(std::abs(chi2_sf(x, df) - p) < 1e-6);
    }
  }

  TEST_CASE("symmetric data give a zero slope") {
    std::vector<double> x;
    std::vector<int> y;
    for (int rep = 0; rep < 3; ++rep) {
      x.insert(x.end(), {-1, -1, 1, 1});
      y.insert(y.end(), {0, 1, 0, 1});
    }
    for (bool standardize : {true, false}) {
      const auto f = fit_univariate_logistic(x, y, standardize);
      CHECK(std::abs(f.coef) < 1e-8);
      CHECK(std::abs(f.odds_ratio - 1.0) < 1e-8);
      CHECK(f.p_value == doctest::Approx(1.0));
    }
  }

  TEST_CASE("500-sample fit matches the reference implementation") {
    const auto s = logit500();
    REQUIRE(s.x.size() == 500);
    const auto o = testing::oracle_json("logit500_statsmodels.json");
    for (const char* key : {"raw", "standardized"}) {
      const bool st = std::string(key) == "standardized";
      const auto f = fit_univariate_logistic(s.x, s.y, st, "x");
      const auto& r = o[key];
      CHECK(std::abs(f.coef - r["coef"].get<double>()) < 1e-4);
      CHECK(std::abs(f.intercept - r["intercept"].get<double>()) < 1e-4);
      CHECK(std::abs(f.std_err - r["se_coef"].get<double>()) < 1e-4);
      CHECK(std::abs(f.z - r["z"].get<double>()) < 1e-4);
      CHECK(std::abs(f.p_value - r["p_value"].get<double>()) < 1e-4);
      CHECK(std::abs(f.nll_trace.back() - r["nll"].get<double>()) < 1e-6);
      CHECK(f.odds_ratio == doctest::Approx(std::exp(f.coef)));
      CHECK(f.ci_lo == doctest::Approx(std::exp(f.coef - 1.96 * f.std_err)));
      CHECK(f.ci_hi == doctest::Approx(std::exp(f.coef + 1.96 * f.std_err)));
      CHECK(f.n == 500);
      CHECK(f.standardized == st);
    }
  }

  TEST_CASE("IRLS never increases the negative log-likelihood") {
    testing::for_all(100, 31, [](testing::Gen& g) {
      const auto s = random_sample(g, g.integer(10, 300), g.uniform(-2, 2), g.uniform(-2, 2));
      try {
        const auto f = fit_univariate_logistic(s.x, s.y, g.coin());
        REQUIRE(f.nll_trace.size() >= 2);
        for (size_t i = 1; i < f.nll_trace.size(); ++i) CHECK(f.nll_trace[i] <= f.nll_trace[i - 1] + 1e-12);
      } catch (const SeparationDetected&) {
      }
    });
  }

  TEST_CASE("scaling x leaves the Wald p-value unchanged") {
    testing::for_all(50, 32, [](testing::Gen& g) {
      const auto s = random_sample(g, 200, -0.3, 0.7);
      const double c = g.coin() ? 10.0 : g.uniform(0.01, 100);
      auto scaled = s.x;
      for (auto& v : scaled) v *= c;
      const auto a = fit_univariate_logistic(s.x, s.y, false);
      const auto b = fit_univariate_logistic(scaled, s.y, false);
      CHECK(std::abs(a.p_value - b.p_value) < 1e-9);
      CHECK(std::abs(a.z - b.z) < 1e-7);
      CHECK(b.coef == doctest::Approx(a.coef / c).epsilon(1e-9));
      const auto as = fit_univariate_logistic(s.x, s.y, true);
      const auto bs = fit_univariate_logistic(scaled, s.y, true);
      CHECK(std::abs(as.coef - bs.coef) < 1e-9);
    });
  }

  TEST_CASE("flipping labels negates the slope") {
    testing::for_all(50, 33, [](testing::Gen& g) {
      const auto s = random_sample(g, 150, 0.2, -0.9);
      auto flipped = s.y;
      for (auto& v : flipped) v = 1 - v;
      const auto a = fit_univariate_logistic(s.x, s.y);
      const auto b = fit_univariate_logistic(s.x, flipped);
      CHECK(std::abs(a.coef + b.coef) < 1e-9);
      CHECK(std::abs(a.p_value - b.p_value) < 1e-9);
    });
  }

  TEST_CASE("logistic error cases") {
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(i);
      y.push_back(i < 10 ? 0 : 1);
    }
    CHECK_THROWS_AS(fit_univariate_logistic(x, y), SeparationDetected);
    CHECK_THROWS_AS(fit_univariate_logistic(std::vector<double>(20, 3.0), y), DegeneratePredictor);
    CHECK_THROWS_AS(fit_univariate_logistic(x, std::vector<int>(20, 1)), InvalidInput);
    CHECK_THROWS_AS(fit_univariate_logistic({1, 2, 3}, {0, 1, 0}), InvalidInput);
    CHECK_THROWS_AS(fit_univariate_logistic(x, std::vector<int>(19, 0)), InvalidInput);
    auto bad = y;
    bad[3] = 2;
    CHECK_THROWS_AS(fit_univariate_logistic(x, bad), InvalidInput);
  }

  TEST_CASE("chi-square reference tables") {
    const auto r0 = chi_square_test(table({{15, 15}, {15, 15}}));
    CHECK(r0.chi2 == 0.0);
    CHECK(r0.p_value == 1.0);
    const auto r1 = chi_square_test(table({{10, 20}, {20, 10}}));
    CHECK(std::abs(r1.chi2 - 20.0 / 3.0) < 1e-12);
    CHECK(std::abs(r1.chi2 - 6.6667) < 1e-4);
    CHECK(std::abs(r1.p_value - 0.00982) < 1e-4);
    CHECK(r1.df == 1);
    for (const auto& o : testing::oracle_json("chi2_contingency.json")) {
      std::vector<std::array<long, 2>> c;
      for (const auto& row : o["table"]) c.push_back({row[0].get<long>(), row[1].get<long>()});
      const auto r = chi_square_test(table(c));
      CHECK(std::abs(r.chi2 - o["chi2"].get<double>()) < 1e-9);
      CHECK(std::abs(r.p_value - o["p_value"].get<double>()) < 1e-9);
      CHECK(r.df == o["dof"].get<int>());
      CHECK(r.low_expected == (o["min_expected"].get<double>() < 5.0));
    }
  }

  TEST_CASE("chi-square invariances and the hand formula") {
    testing::for_all(200, 34, [](testing::Gen& g) {
      std::vector<std::array<long, 2>> c;
      for (int i = 0; i < g.integer(2, 8); ++i) c.push_back({g.integer(1, 40), g.integer(1, 40)});
      const auto base = chi_square_test(table(c));
      CHECK(std::abs(base.chi2 - pearson(c)) < 1e-9 * std::max(1.0, base.chi2));
      auto perm = c;
      std::shuffle(perm.begin(), perm.end(), g.engine());
      CHECK(std::abs(chi_square_test(table(perm)).chi2 - base.chi2) < 1e-9);
      auto swapped = c;
      for (auto& r : swapped) std::swap(r[0], r[1]);
      CHECK(std::abs(chi_square_test(table(swapped)).chi2 - base.chi2) < 1e-9);
      // proportional rows
      std::vector<std::array<long, 2>> prop;
      const long a = g.integer(1, 9), b = g.integer(1, 9);
      for (int i = 0; i < 4; ++i) {
        const long m = g.integer(1, 5);
        prop.push_back({a * m, b * m});
      }
      CHECK(chi_square_test(table(prop)).chi2 == doctest::Approx(0.0));
    });
  }

  TEST_CASE("chi-square drops empty rows and rejects degenerate tables") {
    const auto r = chi_square_test(table({{10, 20}, {0, 0}, {20, 10}}));
    CHECK(r.levels == 2);
    CHECK(r.df == 1);
    CHECK(std::abs(r.chi2 - 20.0 / 3.0) < 1e-12);
    CHECK_THROWS_AS(chi_square_test(table({{10, 20}, {0, 0}})), DegenerateTable);
    CHECK_THROWS_AS(chi_square_test(table({{10, 0}, {5, 0}})), DegenerateTable);
    CHECK_THROWS_AS(chi_square_test(table({{10, -1}, {5, 3}})), InvalidInput);
    CHECK(chi_square_test(table({{1, 2}, {3, 4}})).low_expected);
  }

  TEST_CASE("contingency construction") {
    using normalize::LabeledEntry;
    using normalize::LabelStatus;
    std::vector<LabeledEntry> e = {
        {"h1", "housing", "house", "A", LabelStatus::labeled},
        {"h2", "housing", "home", "A", LabelStatus::labeled},
        {"h3", "housing", "apt", "B", LabelStatus::labeled},
        {"h4", "housing", "apt", "B", LabelStatus::labeled},
        {"h5", "housing", "??", "", LabelStatus::unlabeled},
        {"h6", "housing", "shelter", "B", LabelStatus::labeled},
    };
    const std::map<HadmId, int> y = {{"h1", 1}, {"h2", 0}, {"h3", 1}, {"h4", 1}, {"h5", 1}};
    const auto t = build_contingency(e, y);
    CHECK(t.rows == std::vector<std::string>{"A", "B"});
    CHECK(t.counts[0] == std::array<long, 2>{1, 1});
    CHECK(t.counts[1] == std::array<long, 2>{0, 2});
    CHECK(t.dropped == 1);
    CHECK(t.n() == 4);
    CHECK(t.unique_values == 3);
    CHECK_THROWS_AS(build_contingency({}, y), DegenerateTable);
  }

  TEST_CASE("odds ratio with a log-scale interval") {
    const auto o = compute_odds_ratio_2x2({{{10, 40}, {20, 30}}});
    CHECK(o.odds_ratio == doctest::Approx(0.375));
    const double se = std::sqrt(1.0 / 10 + 1.0 / 40 + 1.0 / 20 + 1.0 / 30);
    CHECK(std::abs(o.ci_lo - std::exp(std::log(0.375) - 1.96 * se)) < 1e-12);
    CHECK(std::abs(o.ci_hi - std::exp(std::log(0.375) + 1.96 * se)) < 1e-12);
    CHECK_FALSE(o.corrected);
    const auto even = compute_odds_ratio_2x2({{{5, 5}, {5, 5}}});
    CHECK(even.odds_ratio == 1.0);
    CHECK(std::abs(std::log(even.ci_lo) + std::log(even.ci_hi)) < 1e-12);
    const auto z = compute_odds_ratio_2x2({{{0, 5}, {5, 5}}});
    CHECK(z.corrected);
    CHECK(z.odds_ratio == doctest::Approx(0.5 * 5.5 / (5.5 * 5.5)));
  }

  TEST_CASE("json output") {
    const auto r = chi_square_test(table({{10, 20}, {20, 10}}), "gender");
    const auto j = to_json(r);
    CHECK(j["variable"] == "gender");
    CHECK(j["df"] == 1);
  }
}
