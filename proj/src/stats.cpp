#include "clinnote/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace clinnote::stats {

using nlohmann::json;

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

namespace {

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term, ap = a;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the Legendre continued fraction, modified Lentz.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double neg_log_lik(const std::vector<double>& x, const std::vector<int>& y, double b0, double b1) {
  double nll = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double eta = b0 + b1 * x[i];
    nll += softplus(eta) - y[i] * eta;
  }
  return nll;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0) || x < 0 || std::isnan(x)) throw InvalidInput("regularized_gamma_q: need a > 0 and x >= 0");
  if (x == 0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_fraction(a, x), 0.0, 1.0);
}

double chi2_sf(double x, double df) {
  if (!(df > 0)) throw InvalidInput("chi2_sf: df must be positive");
  if (x <= 0) return 1.0;
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

LogisticFit fit_univariate_logistic(const std::vector<double>& x_in, const std::vector<int>& y, bool standardize,
                                    const std::string& variable) {
  const size_t n = x_in.size();
  if (n != y.size()) throw InvalidInput("x and y differ in length");
  if (n < 10) throw InvalidInput("logistic fit needs at least 10 samples, got " + std::to_string(n));
  size_t positives = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw InvalidInput("outcome must be 0 or 1");
    positives += static_cast<size_t>(v);
  }
  if (positives == 0 || positives == n) throw InvalidInput("outcome has a single class");

  const double mu = mean(x_in);
  double ss = 0;
  for (double v : x_in) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0)) throw DegeneratePredictor(variable.empty() ? "constant predictor" : variable + " is constant");

  std::vector<double> x = x_in;
  if (standardize)
    for (double& v : x) v = (v - mu) / sd;
  const double scale_to_std = standardize ? 1.0 : sd;

  LogisticFit fit;
  fit.variable = variable;
  fit.n = n;
  fit.standardized = standardize;
  double b0 = 0, b1 = 0;
  double nll = neg_log_lik(x, y, b0, b1);
  fit.nll_trace.push_back(nll);
  double h00 = 0, h01 = 0, h11 = 0;
  bool converged = false;
  for (int iter = 0; iter <= kIrlsMaxIterations; ++iter) {
    double g0 = 0, g1 = 0;
    h00 = h01 = h11 = 0;
    for (size_t i = 0; i < n; ++i) {
      const double p = sigmoid(b0 + b1 * x[i]);
      const double r = y[i] - p, w = p * (1 - p);
      g0 += r;
      g1 += r * x[i];
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
    }
    if (std::hypot(g0, g1) < kIrlsGradientTol) {
      converged = true;
      break;
    }
    if (iter == kIrlsMaxIterations) break;
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0)) throw SeparationDetected(variable + ": information matrix is singular");
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    double step = 1.0, nb0 = b0, nb1 = b1, nnll = nll;
    for (int half = 0; half < 40; ++half) {
      nb0 = b0 + step * d0;
      nb1 = b1 + step * d1;
      nnll = neg_log_lik(x, y, nb0, nb1);
      if (nnll <= nll) break;
      step *= 0.5;
    }
    if (nnll > nll) break;  // no descent possible at machine precision
    b0 = nb0;
    b1 = nb1;
    nll = nnll;
    fit.nll_trace.push_back(nll);
    fit.iterations = iter + 1;
    if (std::fabs(b1 * scale_to_std) > kSeparationBound)
      throw SeparationDetected(variable + ": slope diverges (|b1| > 30 on the standardized scale)");
  }
  auto score_at = [&](double& g0, double& g1) {
    g0 = g1 = h00 = h01 = h11 = 0;
    for (size_t i = 0; i < n; ++i) {
      const double p = sigmoid(b0 + b1 * x[i]);
      const double r = y[i] - p, w = p * (1 - p);
      g0 += r;
      g1 += r * x[i];
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
    }
  };
  if (!converged) {
    // The line search stalls once the likelihood is flat at machine
    // precision; finish with plain Newton steps, which are not traced.
    double g0 = 0, g1 = 0;
    score_at(g0, g1);
    if (std::hypot(g0, g1) > 1e-6 * static_cast<double>(n))
      throw NoConvergence(variable + ": gradient norm " + std::to_string(std::hypot(g0, g1)) + " after " +
                          std::to_string(kIrlsMaxIterations) + " iterations");
    for (int polish = 0; polish < 5 && std::hypot(g0, g1) >= kIrlsGradientTol; ++polish) {
      const double det = h00 * h11 - h01 * h01;
      if (!(det > 0)) throw NoConvergence(variable + ": singular information at final iterate");
      b0 += (h11 * g0 - h01 * g1) / det;
      b1 += (h00 * g1 - h01 * g0) / det;
      score_at(g0, g1);
    }
  }
  const double det = h00 * h11 - h01 * h01;
  if (!(det > 0)) throw NoConvergence(variable + ": singular information at final iterate");
  fit.intercept = b0;
  fit.coef = b1;
  fit.std_err = std::sqrt(h00 / det);
  fit.z = b1 / fit.std_err;
  fit.p_value = std::clamp(normal_two_sided_p(fit.z), 0.0, 1.0);
  fit.odds_ratio = std::exp(b1);
  fit.ci_lo = std::exp(b1 - 1.96 * fit.std_err);
  fit.ci_hi = std::exp(b1 + 1.96 * fit.std_err);
  return fit;
}

long ContingencyTable::n() const {
  long s = 0;
  for (const auto& r : counts) s += r[0] + r[1];
  return s;
}

ChiSquareResult chi_square_test(const ContingencyTable& table, const std::string& variable) {
  if (table.rows.size() != table.counts.size()) throw InvalidInput("contingency rows and counts differ in length");
  std::vector<std::array<long, 2>> rows;
  for (const auto& r : table.counts) {
    if (r[0] < 0 || r[1] < 0) throw InvalidInput("negative count in contingency table");
    if (r[0] + r[1] > 0) rows.push_back(r);
  }
  ChiSquareResult res;
  res.variable = variable;
  res.unique_values = table.unique_values;
  res.levels = rows.size();
  if (rows.size() < 2) throw DegenerateTable(variable + ": fewer than 2 non-empty rows");
  long col[2] = {0, 0};
  for (const auto& r : rows) {
    col[0] += r[0];
    col[1] += r[1];
  }
  if (col[0] == 0 || col[1] == 0) throw DegenerateTable(variable + ": one outcome column is empty");
  const double n = static_cast<double>(col[0] + col[1]);
  res.n = col[0] + col[1];
  double chi2 = 0;
  for (const auto& r : rows) {
    const double rs = static_cast<double>(r[0] + r[1]);
    for (int c = 0; c < 2; ++c) {
      const double e = rs * static_cast<double>(col[c]) / n;
      if (e < 5) res.low_expected = true;
      if (e > 0) chi2 += (r[c] - e) * (r[c] - e) / e;
    }
  }
  res.chi2 = chi2;
  res.df = static_cast<int>(rows.size()) - 1;
  res.p_value = chi2_sf(chi2, res.df);
  return res;
}

ContingencyTable build_contingency(const std::vector<normalize::LabeledEntry>& labeled,
                                   const std::map<HadmId, int>& outcomes) {
  std::map<std::string, std::array<long, 2>> by_label;
  std::set<std::string> raw;
  ContingencyTable t;
  for (const auto& e : labeled) {
    if (e.status != normalize::LabelStatus::labeled) continue;
    auto it = outcomes.find(e.hadm_id);
    if (it == outcomes.end()) {
      ++t.dropped;
      continue;
    }
    auto& row = by_label.try_emplace(e.assigned_category, std::array<long, 2>{0, 0}).first->second;
    ++row[it->second ? 1 : 0];
    raw.insert(e.raw_text);
  }
  if (by_label.empty()) throw DegenerateTable("no labeled entries joined to an outcome");
  for (const auto& [label, counts] : by_label) {
    t.rows.push_back(label);
    t.counts.push_back(counts);
  }
  t.unique_values = raw.size();
  return t;
}

OddsRatio compute_odds_ratio_2x2(const std::array<std::array<double, 2>, 2>& table) {
  double a = table[0][0], b = table[0][1], c = table[1][0], d = table[1][1];
  for (double v : {a, b, c, d})
    if (v < 0 || std::isnan(v)) throw InvalidInput("odds ratio needs non-negative counts");
  OddsRatio out;
  if (a == 0 || b == 0 || c == 0 || d == 0) {
    a += 0.5;
    b += 0.5;
    c += 0.5;
    d += 0.5;
    out.corrected = true;
  }
  out.odds_ratio = (a * d) / (b * c);
  const double se = std::sqrt(1 / a + 1 / b + 1 / c + 1 / d);
  const double l = std::log(out.odds_ratio);
  out.ci_lo = std::exp(l - 1.96 * se);
  out.ci_hi = std::exp(l + 1.96 * se);
  return out;
}

json to_json(const LogisticFit& f) {
  return {{"variable", f.variable},   {"coef", f.coef},         {"intercept", f.intercept},
          {"std_err", f.std_err},     {"z", f.z},               {"p_value", f.p_value},
          {"odds_ratio", f.odds_ratio}, {"ci95", {f.ci_lo, f.ci_hi}}, {"n", f.n},
          {"standardized", f.standardized}, {"iterations", f.iterations}};
}

json to_json(const ChiSquareResult& r) {
  return {{"variable", r.variable}, {"n", r.n},   {"unique_values", r.unique_values}, {"levels", r.levels},
          {"chi2", r.chi2},         {"df", r.df}, {"p_value", r.p_value},             {"low_expected_warning", r.low_expected}};
}

json to_json(const ContingencyTable& t) {
  json rows = json::array();
  for (size_t i = 0; i < t.rows.size(); ++i) rows.push_back({{"label", t.rows[i]}, {"y0", t.counts[i][0]}, {"y1", t.counts[i][1]}});
  return {{"rows", rows}, {"dropped", t.dropped}};
}

}  // namespace clinnote::stats
