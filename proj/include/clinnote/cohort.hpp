#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/csv.hpp"

namespace clinnote::cohort {

// Seconds since 1970-01-01T00:00:00Z. MIMIC dates are shifted into the
// 22nd century, so this is a plain signed count with no calendar limits.
struct Timestamp {
  std::int64_t seconds = 0;
  auto operator<=>(const Timestamp&) const = default;
};

// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS][Z]".
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);
double days_between(Timestamp from, Timestamp to);

struct AdmissionRecord {
  SubjectId subject_id;
  HadmId hadm_id;
  Timestamp admit_time;
  Timestamp discharge_time;
  std::vector<std::string> icd9_codes;
  std::optional<std::string> discharge_note;
  std::optional<Timestamp> dob;
  std::optional<std::string> gender;
  int note_count = 0;            // every notes.csv row for this admission
  int discharge_note_count = 0;  // rows in the discharge-summary category

  double length_of_stay_days() const { return days_between(admit_time, discharge_time); }
  std::optional<double> age_years() const;
};

struct LoadReject {
  std::string table;
  size_t line = 0;
  std::string reason;
};

// Admissions ordered by (subject_id, admit_time, hadm_id).
class CohortStore {
 public:
  CohortStore() = default;
  explicit CohortStore(std::vector<AdmissionRecord> admissions);

  const std::vector<AdmissionRecord>& admissions() const { return admissions_; }
  const AdmissionRecord* find(const HadmId& hadm_id) const;
  size_t size() const { return admissions_.size(); }
  size_t patient_count() const;

 private:
  std::vector<AdmissionRecord> admissions_;
  std::map<HadmId, size_t> index_;
};

struct LoadResult {
  CohortStore store;
  std::vector<LoadReject> rejects;
};

LoadResult load_tables(const std::filesystem::path& admissions_path,
                       const std::filesystem::path& diagnoses_path,
                       const std::filesystem::path& notes_path);
LoadResult load_tables_from_text(std::string_view admissions_csv, std::string_view diagnoses_csv,
                                 std::string_view notes_csv);

// Dot-stripped heart-failure code list; every code starting with "428"
// also qualifies.
const std::vector<std::string>& hf_code_list();
std::string strip_icd9_dots(std::string_view code);
bool is_hf_code(std::string_view dot_stripped_code);

CohortStore filter_hf_cohort(const CohortStore& store);

struct ReadmissionPair {
  SubjectId subject_id;
  HadmId index_hadm_id;
  HadmId next_hadm_id;
  double interval_days = 0.0;
  int label = 0;
  bool has_index_note = false;
};

inline constexpr double kReadmissionWindowDays = 30.0;
int readmission_label(double interval_days);

struct SkippedPair {
  HadmId index_hadm_id;
  HadmId next_hadm_id;
  double interval_days = 0.0;
};

struct PairResult {
  std::vector<ReadmissionPair> pairs;
  std::vector<SkippedPair> skipped;  // overlapping stays (negative interval)
};

PairResult build_readmission_pairs(const CohortStore& store);

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};
// Quantiles at positions p(n+1) with linear interpolation, clamped to the
// sample range; three points [a,b,c] give (a, b, c).
Quartiles quartiles(std::vector<double> values);

struct CohortSummary {
  size_t n_patients = 0;
  size_t n_admissions = 0;
  size_t n_pairs = 0;
  double readmission_rate = 0.0;
  size_t n_notes = 0;
  size_t n_discharge_notes = 0;
  std::optional<double> pct_female;
  std::optional<Quartiles> age;
  std::optional<Quartiles> los;
};

CohortSummary summarize_cohort(const CohortStore& store, const std::vector<ReadmissionPair>& pairs);

nlohmann::json to_json(const AdmissionRecord& r);
AdmissionRecord admission_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortSummary& s);
std::string pairs_to_csv(const std::vector<ReadmissionPair>& pairs);
std::vector<ReadmissionPair> pairs_from_csv(std::string_view text);

}  // namespace clinnote::cohort
