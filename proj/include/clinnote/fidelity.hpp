#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/extractor.hpp"
#include "clinnote/gateway.hpp"
#include "clinnote/vitals.hpp"

namespace clinnote::fidelity {

class JudgeFailed : public Error {
 public:
  explicit JudgeFailed(const std::string& what) : Error("JudgeFailed", what) {}
};
class JudgeReplyInvalid : public Error {
 public:
  explicit JudgeReplyInvalid(const std::string& what) : Error("JudgeReplyInvalid", what) {}
};

// Slack added to every tolerance comparison so that e.g. 98.1 vs 98.6 with
// a 0.5 bound is a hit despite binary rounding.
inline constexpr double kToleranceEpsilon = 1e-9;

struct ToleranceRule {
  vitals::Variable variable;
  std::vector<std::pair<vitals::Unit, double>> native;  // unit -> +/- bound
  double canonical_bound = 0.0;                         // used when units differ
  std::string label;                                    // as printed in reports

  std::optional<double> bound_for(vitals::Unit unit) const;
  bool within(double a, double b, vitals::Unit unit) const;
};

const std::vector<ToleranceRule>& tolerance_rules();
const ToleranceRule& rule_for(vitals::Variable v);

struct TruthVital {
  HadmId hadm_id;
  vitals::Variable variable = vitals::Variable::hr;
  double value = 0.0;
  vitals::Unit unit = vitals::Unit::bpm;
  std::string charttime;
};

// truth_vitals.csv: hadm_id, variable, value, unit, charttime. Rows with an
// unknown variable or unit or a non-numeric value are returned as rejects.
struct TruthVitalsLoad {
  std::vector<TruthVital> rows;
  std::vector<std::string> rejects;
};
TruthVitalsLoad load_truth_vitals(std::string_view csv_text);

// truth_sdoh.csv: hadm_id, variable, value. Returns variable -> hadm -> value.
using TruthSdoh = std::map<std::string, std::map<HadmId, std::string>>;
TruthSdoh load_truth_sdoh(std::string_view csv_text);

struct AgreementRow {
  std::string variable;
  bool categorical = false;
  std::string tolerance;
  size_t n_truth = 0;      // admissions with ground truth
  size_t n_extracted = 0;  // of those, admissions with a usable extraction
  size_t n_hits = 0;
  double pct_extracted = 0.0;
  double cond_acc = 0.0;  // percent of n_extracted
  std::optional<double> mae;
  std::optional<double> mape;  // percent; zero-truth pairs skipped
};

struct AgreementReport {
  std::vector<AgreementRow> rows;
  std::vector<std::string> warnings;
};

// `extracted` holds canonicalized values for every admission; admissions
// are scored only when they have truth rows. Returns nullopt (and appends a
// warning) when no truth exists for the variable.
std::optional<AgreementRow> evaluate_vital(vitals::Variable variable, const std::vector<vitals::CanonicalVital>& extracted,
                                           const std::vector<TruthVital>& truth, std::vector<std::string>& warnings);

// Leading number of an age string ("72", "72 yo"); a decade such as "50s"
// is not an age.
std::optional<double> parse_age(const std::string& text);

// Comparison form of a categorical value ("MALE" and "m" both give "m").
// Age is handled separately because it matches within one year.
std::string canonical_category(const std::string& variable, const std::string& value);
bool categorical_match(const std::string& variable, const std::string& extracted, const std::string& truth);

AgreementRow evaluate_categorical(const std::string& variable, const std::map<HadmId, std::optional<std::string>>& extracted,
                                  const std::map<HadmId, std::string>& truth);

AgreementReport evaluate_agreement(const std::vector<extract::ExtractionRecord>& records,
                                   const std::vector<vitals::CanonicalVital>& canonical,
                                   const std::vector<TruthVital>& truth_vitals, const TruthSdoh& truth_sdoh);

nlohmann::json to_json(const AgreementReport& r);

// ---------------------------------------------------------------- judge

// Dot-stripped ICD-9 code -> description.
class IcdDescriptions {
 public:
  static IcdDescriptions load(const std::filesystem::path& path);
  static IcdDescriptions parse(std::string_view csv_text);
  // Unknown codes come back unchanged.
  std::string describe(const std::string& code) const;
  size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::string> table_;
};

struct JudgeVerdict {
  HadmId hadm_id;
  int score = 0;
  size_t matched_extracted = 0;
  size_t matched_icd = 0;
  size_t n_extracted = 0;
  size_t n_icd = 0;
  std::vector<std::pair<size_t, size_t>> matches;  // (extracted_index, icd_index)

  std::optional<double> cond_acc() const;  // undefined without extractions
  std::optional<double> abs_acc() const;
};

struct JudgeFailure {
  HadmId hadm_id;
  std::string reason;
  std::vector<std::string> raw_responses;
};

using JudgeOutcome = std::variant<JudgeVerdict, JudgeFailure>;

struct JudgeItem {
  HadmId hadm_id;
  std::vector<std::string> extracted;  // "condition (details)"
  std::vector<std::string> icd;        // descriptions
};

std::vector<std::string> diagnosis_strings(const std::vector<extract::Diagnosis>& dx);

std::string judge_request_content(const JudgeItem& item);
// Throws JudgeReplyInvalid for bad JSON, out-of-range scores or indices, or
// a non-injective matching.
JudgeVerdict parse_judge_reply(const JudgeItem& item, const std::string& reply);

struct JudgeConfig {
  std::string system_prompt;
  double temperature = 0.0;
  int max_tokens = 2048;
};

// Items with an empty side are scored 0 without a call. One repair
// re-prompt per item, then JudgeFailure.
std::vector<JudgeOutcome> judge_all(llm::Gateway& gateway, const JudgeConfig& config, const std::vector<JudgeItem>& items);
JudgeVerdict judge_diagnoses(llm::Gateway& gateway, const JudgeConfig& config, const JudgeItem& item);

struct JudgeSummary {
  size_t n_verdicts = 0;
  size_t n_failed = 0;
  double mean_score = 0.0;
  double median_score = 0.0;
  double cond_acc = 0.0;  // fraction
  double abs_acc = 0.0;   // fraction
  double avg_n_extracted = 0.0;
  double avg_n_icd = 0.0;
  bool macro = false;
};

// Micro-averaged by default: sums of matches over sums of list lengths.
JudgeSummary corpus_judge_summary(const std::vector<JudgeVerdict>& verdicts, bool macro = false);

nlohmann::json to_json(const JudgeVerdict& v);
nlohmann::json to_json(const JudgeSummary& s);

}  // namespace clinnote::fidelity
