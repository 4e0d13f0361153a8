#include "clinnote/predictor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace clinnote::predict {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) out.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::isalnum(u))
      cur += static_cast<char>(std::tolower(u));
    else
      flush();
  }
  flush();
  return out;
}

// ------------------------------------------------------------ vectorizer

Vectorizer Vectorizer::fit(const std::vector<std::string>& train_docs) {
  if (train_docs.size() < 2) throw InvalidInput("vectorizer needs at least 2 training documents");
  std::map<std::string, size_t> df;
  for (const auto& d : train_docs) {
    auto toks = tokenize(d);
    std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df[t];
  }
  Vectorizer v;
  const double n = static_cast<double>(train_docs.size());
  for (const auto& [term, count] : df) {
    if (count < 2) continue;
    v.terms_.push_back(term);
    v.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  if (v.terms_.empty()) throw VectorizerDegenerate("no token occurs in two or more training documents");
  return v;
}

std::optional<size_t> Vectorizer::index_of(const std::string& term) const {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), term);
  if (it == terms_.end() || *it != term) return std::nullopt;
  return static_cast<size_t>(it - terms_.begin());
}

SparseVector Vectorizer::transform(std::string_view doc) const {
  std::map<size_t, double> tf;
  for (const auto& t : tokenize(doc))
    if (auto i = index_of(t)) tf[*i] += 1.0;
  SparseVector out;
  double norm = 0;
  for (const auto& [i, c] : tf) {
    const double w = c * idf_[i];
    out.emplace_back(i, w);
    norm += w * w;
  }
  norm = std::sqrt(norm);
  for (auto& [i, w] : out) w /= norm;
  return out;
}

std::string Vectorizer::vocabulary_hash() const {
  std::string joined;
  for (const auto& t : terms_) {
    joined += t;
    joined += '\n';
  }
  return sha256_hex(joined);
}

// ------------------------------------------------------------ classifier

namespace {

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double dot(const SparseVector& x, const std::vector<double>& w) {
  double s = 0;
  for (const auto& [i, v] : x) s += v * w[i];
  return s;
}

struct Objective {
  const std::vector<SparseVector>& x;
  const std::vector<int>& y;
  double lambda;

  // Value; fills the gradient (last slot is the intercept) when asked.
  double operator()(const std::vector<double>& theta, std::vector<double>* grad) const {
    const size_t d = theta.size() - 1;
    const double b = theta[d];
    double f = 0;
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) {
      const double eta = dot(x[i], theta) + b;
      f += softplus(eta) - y[i] * eta;
      if (grad) {
        const double r = sigmoid(eta) - y[i];
        for (const auto& [j, v] : x[i]) (*grad)[j] += r * v;
        (*grad)[d] += r;
      }
    }
    for (size_t j = 0; j < d; ++j) {
      f += 0.5 * lambda * theta[j] * theta[j];
      if (grad) (*grad)[j] += lambda * theta[j];
    }
    return f;
  }
};

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

}  // namespace

double LogisticModel::predict_proba(const SparseVector& x) const { return sigmoid(dot(x, weights) + intercept); }

LogisticModel train_classifier(const std::vector<SparseVector>& x, const std::vector<int>& y, size_t dim,
                               double l2_lambda) {
  if (x.size() != y.size()) throw InvalidInput("feature and label counts differ");
  if (!(l2_lambda >= 0)) throw InvalidInput("l2_lambda must be non-negative");
  const size_t pos = static_cast<size_t>(std::count(y.begin(), y.end(), 1));
  if (pos == 0 || pos == y.size()) throw InvalidInput("training data needs both classes");
  for (const auto& row : x)
    for (const auto& [j, v] : row)
      if (j >= dim) throw InvalidInput("feature index outside the vocabulary");

  const Objective f{x, y, l2_lambda};
  std::vector<double> theta(dim + 1, 0.0), grad(dim + 1), trial(dim + 1), trial_grad(dim + 1);
  double fx = f(theta, &grad);
  double gnorm = norm2(grad);
  // Lipschitz bound of the loss for unit-norm rows plus the intercept.
  double step = 1.0 / (0.5 * static_cast<double>(x.size()) + l2_lambda);

  LogisticModel m;
  int iter = 0;
  for (; iter < kClassifierMaxIterations && gnorm >= kClassifierGradientTol; ++iter) {
    double t = step;
    double ft = fx;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      for (size_t j = 0; j <= dim; ++j) trial[j] = theta[j] - t * grad[j];
      ft = f(trial, &trial_grad);
      if (ft <= fx - 1e-4 * t * gnorm * gnorm) {
        accepted = true;
        break;
      }
      // Near the optimum the required decrease is below the loss's
      // rounding; a flat step that shrinks the gradient still counts.
      if (std::fabs(ft - fx) <= 16 * std::numeric_limits<double>::epsilon() * std::fabs(fx) &&
          norm2(trial_grad) < gnorm) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    // Barzilai-Borwein trial step for the next iteration.
    double ss = 0, sy = 0;
    for (size_t j = 0; j <= dim; ++j) {
      const double s = trial[j] - theta[j], yy = trial_grad[j] - grad[j];
      ss += s * s;
      sy += s * yy;
    }
    step = (sy > 0 && std::isfinite(ss / sy)) ? ss / sy : t;
    theta.swap(trial);
    grad.swap(trial_grad);
    fx = ft;
    gnorm = norm2(grad);
  }
  m.weights.assign(theta.begin(), theta.end() - 1);
  m.intercept = theta.back();
  m.iterations = iter;
  m.gradient_norm = gnorm;
  m.converged = gnorm < kClassifierGradientTol;
  return m;
}

// ------------------------------------------------------------ metrics

namespace {

void check_metric_input(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidInput("scores and labels differ in length");
  if (scores.empty()) throw InvalidInput("metrics need at least one score");
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_metric_input(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0, neg = 0, rank_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      ++pos;
      rank_sum += rank[i];
    } else {
      ++neg;
    }
  }
  if (pos == 0 || neg == 0) throw InvalidInput("AUROC needs both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_metric_input(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw InvalidInput("AUPRC needs at least one positive");
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

double accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_metric_input(scores, labels);
  size_t hit = 0;
  for (size_t i = 0; i < scores.size(); ++i) hit += (scores[i] >= threshold) == (labels[i] == 1);
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_metric_input(scores, labels);
  double tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= threshold;
    if (p && labels[i]) ++tp;
    if (p && !labels[i]) ++fp;
    if (!p && labels[i]) ++fn;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

// ------------------------------------------------------------ cross-validation

std::vector<int> stratified_folds(const std::vector<int>& labels, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw InvalidInput("need at least 2 folds");
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  auto shuffle = [&](std::vector<size_t>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
  };
  shuffle(pos);
  shuffle(neg);
  std::vector<int> fold(labels.size());
  const auto k = static_cast<size_t>(n_folds);
  for (size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % k);
  for (size_t j = 0; j < neg.size(); ++j) fold[neg[j]] = static_cast<int>((pos.size() + j) % k);
  return fold;
}

namespace {

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  r.mean = mean(xs);
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

bool folds_usable(const std::vector<int>& fold, const std::vector<int>& labels, int k) {
  for (int f = 0; f < k; ++f) {
    int test_pos = 0, test_neg = 0, train_pos = 0, train_neg = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (fold[i] == f)
        (labels[i] ? test_pos : test_neg) += 1;
      else
        (labels[i] ? train_pos : train_neg) += 1;
    }
    if (!test_pos || !test_neg || !train_pos || !train_neg) return false;
  }
  return true;
}

}  // namespace

PredictionReport evaluate_cv(const std::string& variant, const std::vector<LabeledDoc>& docs, int n_folds,
                             std::uint64_t seed, double l2_lambda) {
  if (n_folds < 2) throw InvalidInput("need at least 2 folds");
  if (docs.size() < static_cast<size_t>(2 * n_folds))
    throw CVInfeasible(variant + ": " + std::to_string(docs.size()) + " documents for " + std::to_string(n_folds) +
                       " folds");
  std::vector<int> labels;
  for (const auto& d : docs) labels.push_back(d.label);

  PredictionReport rep;
  rep.input_variant = variant;
  rep.n_folds = n_folds;
  rep.seed = seed;
  rep.l2_lambda = l2_lambda;
  rep.n_documents = docs.size();
  bool found = false;
  for (int attempt = 0; attempt < kStratificationRetries && !found; ++attempt) {
    rep.effective_seed = seed + static_cast<std::uint64_t>(attempt);
    rep.fold_of = stratified_folds(labels, n_folds, rep.effective_seed);
    found = folds_usable(rep.fold_of, labels, n_folds);
  }
  if (!found) throw CVInfeasible(variant + ": some fold lacks a class after " + std::to_string(kStratificationRetries) + " seeds");

  std::vector<double> oof(docs.size(), 0.0);
  std::vector<double> au, ap, acc, f1s, vocab;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<std::string> train_text;
    std::vector<int> train_y;
    std::vector<size_t> test_idx;
    for (size_t i = 0; i < docs.size(); ++i) {
      if (rep.fold_of[i] == f) {
        test_idx.push_back(i);
      } else {
        train_text.push_back(docs[i].text);
        train_y.push_back(docs[i].label);
      }
    }
    const Vectorizer vec = Vectorizer::fit(train_text);
    std::vector<SparseVector> xtrain;
    for (const auto& t : train_text) xtrain.push_back(vec.transform(t));
    const LogisticModel model = train_classifier(xtrain, train_y, vec.size(), l2_lambda);

    FoldMetrics fm;
    std::vector<double> scores;
    std::vector<int> ytest;
    for (size_t i : test_idx) {
      const auto v = vec.transform(docs[i].text);
      if (v.empty()) ++fm.empty_test_vectors;
      oof[i] = model.predict_proba(v);
      scores.push_back(oof[i]);
      ytest.push_back(docs[i].label);
    }
    fm.auroc = auroc(scores, ytest);
    fm.auprc = auprc(scores, ytest);
    fm.accuracy = accuracy_at(scores, ytest);
    fm.f1 = f1_at(scores, ytest);
    fm.n_train = train_text.size();
    fm.n_test = test_idx.size();
    fm.vocabulary_size = vec.size();
    fm.vocabulary_hash = vec.vocabulary_hash();
    fm.converged = model.converged;
    fm.gradient_norm = model.gradient_norm;
    au.push_back(fm.auroc);
    ap.push_back(fm.auprc);
    acc.push_back(fm.accuracy);
    f1s.push_back(fm.f1);
    vocab.push_back(static_cast<double>(fm.vocabulary_size));
    rep.folds.push_back(std::move(fm));
  }
  rep.auroc = mean_sd(au);
  rep.auprc = mean_sd(ap);
  rep.accuracy = mean_sd(acc);
  rep.f1 = mean_sd(f1s);
  rep.vocabulary_size = mean(vocab);
  for (size_t i = 0; i < docs.size(); ++i) rep.scores.emplace_back(docs[i].hadm_id, oof[i]);
  return rep;
}

json to_json(const PredictionReport& r) {
  auto ms = [](const MeanSd& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; };
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"auroc", f.auroc},
                     {"auprc", f.auprc},
                     {"accuracy", f.accuracy},
                     {"f1", f.f1},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test},
                     {"vocabulary_size", f.vocabulary_size},
                     {"vocabulary_hash", f.vocabulary_hash},
                     {"converged", f.converged},
                     {"gradient_norm", f.gradient_norm},
                     {"empty_test_vectors", f.empty_test_vectors}});
  return {{"input_variant", r.input_variant},
          {"n_folds", r.n_folds},
          {"seed", r.seed},
          {"effective_seed", r.effective_seed},
          {"l2_lambda", r.l2_lambda},
          {"n_documents", r.n_documents},
          {"vocabulary_size", r.vocabulary_size},
          {"auroc", ms(r.auroc)},
          {"auprc", ms(r.auprc)},
          {"accuracy", ms(r.accuracy)},
          {"f1", ms(r.f1)},
          {"folds", folds}};
}

}  // namespace clinnote::predict
