#include "clinnote/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace clinnote::cohort {

namespace {

bool read_int(std::string_view s, size_t pos, size_t len, int& out) {
  if (pos + len > s.size()) return false;
  auto first = s.data() + pos, last = first + len;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

const std::set<std::string, std::less<>> kDischargeCategories = {"discharge summary", "discharge"};

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  std::string s = trim(text);
  std::string_view v = s;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (v.size() < 10 || v[4] != '-' || v[7] != '-') return std::nullopt;
  if (!read_int(v, 0, 4, y) || !read_int(v, 5, 2, mo) || !read_int(v, 8, 2, d)) return std::nullopt;
  size_t pos = 10;
  if (pos < v.size()) {
    if (v[pos] != 'T' && v[pos] != ' ') return std::nullopt;
    ++pos;
    if (!read_int(v, pos, 2, h) || pos + 2 >= v.size() || v[pos + 2] != ':' ||
        !read_int(v, pos + 3, 2, mi))
      return std::nullopt;
    pos += 5;
    if (pos < v.size() && v[pos] == ':') {
      if (!read_int(v, pos + 1, 2, sec)) return std::nullopt;
      pos += 3;
    }
    if (pos < v.size() && v[pos] == '.') {  // fractional seconds, truncated
      ++pos;
      while (pos < v.size() && std::isdigit(static_cast<unsigned char>(v[pos]))) ++pos;
    }
    if (pos < v.size() && v[pos] == 'Z') ++pos;
    if (pos != v.size()) return std::nullopt;
  }
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  auto days = sys_days(ymd).time_since_epoch().count();
  return Timestamp{static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  std::int64_t days = t.seconds / 86400;
  std::int64_t rem = t.seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

double days_between(Timestamp from, Timestamp to) {
  return static_cast<double>(to.seconds - from.seconds) / 86400.0;
}

std::optional<double> AdmissionRecord::age_years() const {
  if (!dob) return std::nullopt;
  return days_between(*dob, admit_time) / 365.25;
}

CohortStore::CohortStore(std::vector<AdmissionRecord> admissions) : admissions_(std::move(admissions)) {
  std::sort(admissions_.begin(), admissions_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.admit_time, a.hadm_id) < std::tie(b.subject_id, b.admit_time, b.hadm_id);
  });
  for (size_t i = 0; i < admissions_.size(); ++i) index_[admissions_[i].hadm_id] = i;
}

const AdmissionRecord* CohortStore::find(const HadmId& hadm_id) const {
  auto it = index_.find(hadm_id);
  return it == index_.end() ? nullptr : &admissions_[it->second];
}

size_t CohortStore::patient_count() const {
  std::set<std::string_view> subjects;
  for (const auto& a : admissions_) subjects.insert(a.subject_id);
  return subjects.size();
}

LoadResult load_tables(const std::filesystem::path& admissions_path,
                       const std::filesystem::path& diagnoses_path,
                       const std::filesystem::path& notes_path) {
  return load_tables_from_text(read_file(admissions_path), read_file(diagnoses_path), read_file(notes_path));
}

LoadResult load_tables_from_text(std::string_view admissions_csv, std::string_view diagnoses_csv,
                                 std::string_view notes_csv) {
  LoadResult result;
  auto reject = [&](std::string table, size_t line, std::string reason) {
    result.rejects.push_back({std::move(table), line, std::move(reason)});
  };

  auto adm = csv::Table::parse(admissions_csv);
  const size_t c_subject = adm.require_column("subject_id", "admissions.csv");
  const size_t c_hadm = adm.require_column("hadm_id", "admissions.csv");
  const size_t c_admit = adm.require_column("admit_time", "admissions.csv");
  const size_t c_disch = adm.require_column("discharge_time", "admissions.csv");
  const auto c_dob = adm.column("dob");
  const auto c_gender = adm.column("gender");
  for (const auto& r : adm.rejects()) reject("admissions.csv", r.line, r.reason);

  std::vector<AdmissionRecord> records;
  std::map<HadmId, size_t> by_hadm;
  for (const auto& row : adm.rows()) {
    AdmissionRecord rec;
    rec.subject_id = trim(row.fields[c_subject]);
    rec.hadm_id = trim(row.fields[c_hadm]);
    auto admit = parse_timestamp(row.fields[c_admit]);
    auto disch = parse_timestamp(row.fields[c_disch]);
    if (rec.subject_id.empty() || rec.hadm_id.empty()) {
      reject("admissions.csv", row.line, "empty identifier");
      continue;
    }
    if (!admit || !disch) {
      reject("admissions.csv", row.line, "unparseable timestamp");
      continue;
    }
    if (*disch < *admit) {
      reject("admissions.csv", row.line, "discharge_time precedes admit_time");
      continue;
    }
    if (by_hadm.count(rec.hadm_id)) {
      reject("admissions.csv", row.line, "duplicate hadm_id " + rec.hadm_id);
      continue;
    }
    rec.admit_time = *admit;
    rec.discharge_time = *disch;
    if (c_dob) {
      const std::string raw = trim(row.fields[*c_dob]);
      if (!raw.empty()) {
        rec.dob = parse_timestamp(raw);
        if (!rec.dob) reject("admissions.csv", row.line, "unparseable dob (ignored)");
      }
    }
    if (c_gender) {
      std::string g = trim(row.fields[*c_gender]);
      if (!g.empty()) rec.gender = g;
    }
    by_hadm[rec.hadm_id] = records.size();
    records.push_back(std::move(rec));
  }

  auto dx = csv::Table::parse(diagnoses_csv);
  const size_t d_hadm = dx.require_column("hadm_id", "diagnoses.csv");
  const size_t d_code = dx.require_column("icd9_code", "diagnoses.csv");
  dx.require_column("subject_id", "diagnoses.csv");
  for (const auto& r : dx.rejects()) reject("diagnoses.csv", r.line, r.reason);
  for (const auto& row : dx.rows()) {
    auto it = by_hadm.find(trim(row.fields[d_hadm]));
    if (it == by_hadm.end()) {
      reject("diagnoses.csv", row.line, "unknown hadm_id");
      continue;
    }
    std::string code = strip_icd9_dots(row.fields[d_code]);
    if (code.empty()) {
      reject("diagnoses.csv", row.line, "empty icd9_code");
      continue;
    }
    records[it->second].icd9_codes.push_back(std::move(code));
  }

  auto notes = csv::Table::parse(notes_csv);
  const size_t n_hadm = notes.require_column("hadm_id", "notes.csv");
  const size_t n_cat = notes.require_column("category", "notes.csv");
  const size_t n_date = notes.require_column("chart_date", "notes.csv");
  const size_t n_text = notes.require_column("text", "notes.csv");
  notes.require_column("subject_id", "notes.csv");
  for (const auto& r : notes.rejects()) reject("notes.csv", r.line, r.reason);
  std::map<HadmId, Timestamp> attached_date;
  for (const auto& row : notes.rows()) {
    auto it = by_hadm.find(trim(row.fields[n_hadm]));
    if (it == by_hadm.end()) {
      reject("notes.csv", row.line, "unknown hadm_id");
      continue;
    }
    auto& rec = records[it->second];
    const bool discharge = kDischargeCategories.count(to_lower(trim(row.fields[n_cat]))) > 0;
    auto date = parse_timestamp(row.fields[n_date]);
    if (discharge && !date) {
      reject("notes.csv", row.line, "unparseable chart_date");
      continue;
    }
    ++rec.note_count;
    if (!discharge) continue;
    ++rec.discharge_note_count;
    // Latest chart date wins; a tie goes to the later row.
    auto prev = attached_date.find(rec.hadm_id);
    if (prev == attached_date.end() || *date >= prev->second) {
      attached_date[rec.hadm_id] = *date;
      rec.discharge_note = row.fields[n_text];
    }
  }

  result.store = CohortStore(std::move(records));
  return result;
}

std::string strip_icd9_dots(std::string_view code) {
  std::string out;
  for (char c : code)
    if (c != '.' && !std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

const std::vector<std::string>& hf_code_list() {
  static const std::vector<std::string> codes = [] {
    const char* dotted[] = {"398.91", "402.01", "402.11", "402.91", "404.01",
                            "404.03", "404.11", "404.13", "404.91", "404.93"};
    std::vector<std::string> out;
    for (const char* c : dotted) out.push_back(strip_icd9_dots(c));
    return out;
  }();
  return codes;
}

bool is_hf_code(std::string_view code) {
  if (starts_with(code, "428")) return true;
  const auto& list = hf_code_list();
  return std::find(list.begin(), list.end(), code) != list.end();
}

CohortStore filter_hf_cohort(const CohortStore& store) {
  std::set<SubjectId> keep;
  for (const auto& a : store.admissions())
    if (std::any_of(a.icd9_codes.begin(), a.icd9_codes.end(), [](const auto& c) { return is_hf_code(c); }))
      keep.insert(a.subject_id);
  std::vector<AdmissionRecord> out;
  for (const auto& a : store.admissions())
    if (keep.count(a.subject_id)) out.push_back(a);
  return CohortStore(std::move(out));
}

int readmission_label(double interval_days) { return interval_days <= kReadmissionWindowDays ? 1 : 0; }

PairResult build_readmission_pairs(const CohortStore& store) {
  PairResult out;
  const auto& adm = store.admissions();  // already ordered per patient by admit time
  for (size_t i = 0; i + 1 < adm.size(); ++i) {
    const auto& cur = adm[i];
    const auto& next = adm[i + 1];
    if (cur.subject_id != next.subject_id) continue;
    const double interval = days_between(cur.discharge_time, next.admit_time);
    if (interval < 0.0) {
      out.skipped.push_back({cur.hadm_id, next.hadm_id, interval});
      continue;
    }
    out.pairs.push_back({cur.subject_id, cur.hadm_id, next.hadm_id, interval, readmission_label(interval),
                         cur.discharge_note.has_value()});
  }
  return out;
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("quartiles of empty sequence");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto at = [&](double p) {
    double pos = p * (n + 1.0);  // 1-based
    if (pos <= 1.0) return values.front();
    if (pos >= n) return values.back();
    const auto lo = static_cast<size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo - 1] + frac * (values[lo] - values[lo - 1]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

CohortSummary summarize_cohort(const CohortStore& store, const std::vector<ReadmissionPair>& pairs) {
  CohortSummary s;
  s.n_patients = store.patient_count();
  s.n_admissions = store.size();
  s.n_pairs = pairs.size();
  if (!pairs.empty()) {
    double positives = 0;
    for (const auto& p : pairs) positives += p.label;
    s.readmission_rate = positives / static_cast<double>(pairs.size());
  }
  std::map<SubjectId, std::string> gender_by_subject;
  for (const auto& a : store.admissions()) {
    s.n_notes += static_cast<size_t>(a.note_count);
    if (a.discharge_note) ++s.n_discharge_notes;
    if (a.gender) gender_by_subject[a.subject_id] = to_lower(*a.gender);
  }
  if (!gender_by_subject.empty()) {
    double female = 0;
    for (const auto& [_, g] : gender_by_subject) female += (g == "f" || g == "female") ? 1 : 0;
    s.pct_female = 100.0 * female / static_cast<double>(gender_by_subject.size());
  }

  // Age and LOS are taken at index admissions when pairs exist.
  std::vector<const AdmissionRecord*> basis;
  if (!pairs.empty()) {
    for (const auto& p : pairs)
      if (const auto* a = store.find(p.index_hadm_id)) basis.push_back(a);
  } else {
    for (const auto& a : store.admissions()) basis.push_back(&a);
  }
  std::vector<double> ages, los;
  for (const auto* a : basis) {
    if (auto age = a->age_years()) ages.push_back(*age);
    los.push_back(a->length_of_stay_days());
  }
  if (!ages.empty()) s.age = quartiles(ages);
  if (!los.empty()) s.los = quartiles(los);
  return s;
}

nlohmann::json to_json(const AdmissionRecord& r) {
  nlohmann::json j;
  j["subject_id"] = r.subject_id;
  j["hadm_id"] = r.hadm_id;
  j["admit_time"] = format_timestamp(r.admit_time);
  j["discharge_time"] = format_timestamp(r.discharge_time);
  j["icd9_codes"] = r.icd9_codes;
  j["discharge_note"] = r.discharge_note ? nlohmann::json(*r.discharge_note) : nlohmann::json(nullptr);
  j["dob"] = r.dob ? nlohmann::json(format_timestamp(*r.dob)) : nlohmann::json(nullptr);
  j["gender"] = r.gender ? nlohmann::json(*r.gender) : nlohmann::json(nullptr);
  j["note_count"] = r.note_count;
  j["discharge_note_count"] = r.discharge_note_count;
  return j;
}

AdmissionRecord admission_from_json(const nlohmann::json& j) {
  AdmissionRecord r;
  r.subject_id = j.at("subject_id").get<std::string>();
  r.hadm_id = j.at("hadm_id").get<std::string>();
  auto ts = [&](const char* key) {
    auto t = parse_timestamp(j.at(key).get<std::string>());
    if (!t) throw InvalidInput(std::string("bad timestamp in cohort record: ") + key);
    return *t;
  };
  r.admit_time = ts("admit_time");
  r.discharge_time = ts("discharge_time");
  r.icd9_codes = j.at("icd9_codes").get<std::vector<std::string>>();
  if (!j.at("discharge_note").is_null()) r.discharge_note = j["discharge_note"].get<std::string>();
  if (j.contains("dob") && !j["dob"].is_null()) r.dob = ts("dob");
  if (j.contains("gender") && !j["gender"].is_null()) r.gender = j["gender"].get<std::string>();
  r.note_count = j.value("note_count", 0);
  r.discharge_note_count = j.value("discharge_note_count", 0);
  return r;
}

nlohmann::json to_json(const CohortSummary& s) {
  auto q = [](const std::optional<Quartiles>& v) -> nlohmann::json {
    if (!v) return nullptr;
    return {{"median", v->median}, {"q1", v->q1}, {"q3", v->q3}};
  };
  return {{"n_patients", s.n_patients},
          {"n_admissions", s.n_admissions},
          {"n_pairs", s.n_pairs},
          {"readmission_rate", s.readmission_rate},
          {"n_notes", s.n_notes},
          {"n_discharge_notes", s.n_discharge_notes},
          {"pct_female", s.pct_female ? nlohmann::json(*s.pct_female) : nlohmann::json(nullptr)},
          {"age_years", q(s.age)},
          {"length_of_stay_days", q(s.los)}};
}

std::string pairs_to_csv(const std::vector<ReadmissionPair>& pairs) {
  csv::Writer w({"subject_id", "index_hadm_id", "next_hadm_id", "interval_days", "label", "has_index_note"});
  for (const auto& p : pairs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", p.interval_days);
    w.add({p.subject_id, p.index_hadm_id, p.next_hadm_id, buf, std::to_string(p.label),
           p.has_index_note ? "1" : "0"});
  }
  return w.str();
}

std::vector<ReadmissionPair> pairs_from_csv(std::string_view text) {
  auto t = csv::Table::parse(text);
  if (!t.rejects().empty()) throw InvalidInput("malformed pairs.csv");
  const size_t cs = t.require_column("subject_id", "pairs.csv");
  const size_t ci = t.require_column("index_hadm_id", "pairs.csv");
  const size_t cn = t.require_column("next_hadm_id", "pairs.csv");
  const size_t cd = t.require_column("interval_days", "pairs.csv");
  const size_t cl = t.require_column("label", "pairs.csv");
  const size_t ch = t.require_column("has_index_note", "pairs.csv");
  std::vector<ReadmissionPair> out;
  for (const auto& r : t.rows())
    out.push_back({r.fields[cs], r.fields[ci], r.fields[cn], std::stod(r.fields[cd]), std::stoi(r.fields[cl]),
                   r.fields[ch] == "1"});
  return out;
}

}  // namespace clinnote::cohort
