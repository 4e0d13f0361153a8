#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/normalizer.hpp"

namespace clinnote::stats {

class SeparationDetected : public Error {
 public:
  explicit SeparationDetected(const std::string& what) : Error("SeparationDetected", what) {}
};
class NoConvergence : public Error {
 public:
  explicit NoConvergence(const std::string& what) : Error("NoConvergence", what) {}
};
class DegeneratePredictor : public Error {
 public:
  explicit DegeneratePredictor(const std::string& what) : Error("DegeneratePredictor", what) {}
};
class DegenerateTable : public Error {
 public:
  explicit DegenerateTable(const std::string& what) : Error("DegenerateTable", what) {}
};

// Two-sided p for a standard normal statistic.
double normal_two_sided_p(double z);

// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
double regularized_gamma_q(double a, double x);
// Upper tail of the chi-square distribution.
double chi2_sf(double x, double df);

inline constexpr int kIrlsMaxIterations = 50;
inline constexpr double kIrlsGradientTol = 1e-8;
inline constexpr double kSeparationBound = 30.0;  // |slope| on the standardized scale

struct LogisticFit {
  std::string variable;
  double intercept = 0.0;
  double coef = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double odds_ratio = 1.0;
  double ci_lo = 1.0, ci_hi = 1.0;
  size_t n = 0;
  bool standardized = true;
  int iterations = 0;
  std::vector<double> nll_trace;  // starting point, then after each accepted step
};

// logit(p) = b0 + b1 * x', with x' the z-score of x (sample SD) when
// `standardize` is set. Newton/IRLS with step halving.
LogisticFit fit_univariate_logistic(const std::vector<double>& x, const std::vector<int>& y, bool standardize = true,
                                    const std::string& variable = {});

struct ContingencyTable {
  std::vector<std::string> rows;
  std::vector<std::array<long, 2>> counts;  // columns: y = 0, y = 1
  size_t dropped = 0;                        // entries without an outcome
  size_t unique_values = 0;                  // distinct raw texts counted

  long n() const;
};

struct ChiSquareResult {
  std::string variable;
  long n = 0;
  size_t unique_values = 0;
  size_t levels = 0;  // rows with a nonzero sum
  double chi2 = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool low_expected = false;  // some expected count below 5
};

// Pearson test without continuity correction; all-zero rows are dropped.
ChiSquareResult chi_square_test(const ContingencyTable& table, const std::string& variable = {});

// Unlabeled entries are skipped; entries whose admission has no outcome
// are counted in `dropped`. Rows are sorted by label.
ContingencyTable build_contingency(const std::vector<normalize::LabeledEntry>& labeled,
                                   const std::map<HadmId, int>& outcomes);

struct OddsRatio {
  double odds_ratio = 1.0;
  double ci_lo = 1.0, ci_hi = 1.0;
  bool corrected = false;  // Haldane +0.5 applied
};

// [[a, b], [c, d]] -> ad / bc with a Woolf interval.
OddsRatio compute_odds_ratio_2x2(const std::array<std::array<double, 2>, 2>& table);

nlohmann::json to_json(const LogisticFit& f);
nlohmann::json to_json(const ChiSquareResult& r);
nlohmann::json to_json(const ContingencyTable& t);

}  // namespace clinnote::stats
