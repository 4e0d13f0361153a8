#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"

namespace clinnote::predict {

class VectorizerDegenerate : public Error {
 public:
  explicit VectorizerDegenerate(const std::string& what) : Error("VectorizerDegenerate", what) {}
};
class CVInfeasible : public Error {
 public:
  explicit CVInfeasible(const std::string& what) : Error("CVInfeasible", what) {}
};

// Lowercased maximal [a-z0-9] runs of length >= 2.
std::vector<std::string> tokenize(std::string_view text);

using SparseVector = std::vector<std::pair<size_t, double>>;  // sorted by index

class Vectorizer {
 public:
  // Vocabulary: tokens in at least two training documents.
  // idf(t) = ln((1 + N) / (1 + df(t))) + 1.
  static Vectorizer fit(const std::vector<std::string>& train_docs);

  // tf * idf, L2-normalized; empty when no token is in the vocabulary.
  SparseVector transform(std::string_view doc) const;

  size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<double>& idf() const { return idf_; }
  std::optional<size_t> index_of(const std::string& term) const;
  // SHA-256 over the sorted vocabulary.
  std::string vocabulary_hash() const;

 private:
  std::vector<std::string> terms_;  // sorted
  std::vector<double> idf_;
};

struct LogisticModel {
  std::vector<double> weights;
  double intercept = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;

  double predict_proba(const SparseVector& x) const;
};

inline constexpr int kClassifierMaxIterations = 1000;
inline constexpr double kClassifierGradientTol = 1e-6;

// Minimizes sum of log-losses + (lambda / 2) * |w|^2 by gradient descent
// with Barzilai-Borwein trial steps and Armijo backtracking. The intercept
// is not penalized. Non-convergence is reported on the model, not thrown.
LogisticModel train_classifier(const std::vector<SparseVector>& x, const std::vector<int>& y, size_t dim,
                               double l2_lambda = 1.0);

// Mann-Whitney statistic with midranks for ties.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
// Step-wise area under the precision-recall curve (average precision),
// one step per distinct score.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);
double accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);
double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

// Fold id per document. Each class is shuffled (seeded Fisher-Yates) and
// dealt round-robin, so per-fold class counts differ by at most one.
std::vector<int> stratified_folds(const std::vector<int>& labels, int n_folds, std::uint64_t seed);

struct LabeledDoc {
  HadmId hadm_id;
  std::string text;
  int label = 0;
};

struct FoldMetrics {
  double auroc = 0, auprc = 0, accuracy = 0, f1 = 0;
  size_t n_train = 0, n_test = 0;
  size_t vocabulary_size = 0;
  std::string vocabulary_hash;
  bool converged = true;
  double gradient_norm = 0.0;
  size_t empty_test_vectors = 0;
};

struct MeanSd {
  double mean = 0, sd = 0;
};

struct PredictionReport {
  std::string input_variant;
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::uint64_t effective_seed = 0;  // after stratification retries
  double l2_lambda = 1.0;
  size_t n_documents = 0;
  std::vector<FoldMetrics> folds;
  MeanSd auroc, auprc, accuracy, f1;
  double vocabulary_size = 0;  // mean over folds
  std::vector<std::pair<HadmId, double>> scores;  // out-of-fold probability per document
  std::vector<int> fold_of;
};

inline constexpr int kStratificationRetries = 5;

PredictionReport evaluate_cv(const std::string& variant, const std::vector<LabeledDoc>& docs, int n_folds,
                             std::uint64_t seed, double l2_lambda = 1.0);

nlohmann::json to_json(const PredictionReport& r);

}  // namespace clinnote::predict
