#include "clinnote/fidelity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "clinnote/csv.hpp"
#include "clinnote/json_scan.hpp"

namespace clinnote::fidelity {

using nlohmann::json;
using vitals::Unit;
using vitals::Variable;

// ------------------------------------------------------------ tolerances

std::optional<double> ToleranceRule::bound_for(Unit unit) const {
  for (const auto& [u, b] : native)
    if (u == unit) return b;
  return std::nullopt;
}

bool ToleranceRule::within(double a, double b, Unit unit) const {
  const auto bound = bound_for(unit);
  const double limit = bound ? *bound : canonical_bound;
  return std::fabs(a - b) <= limit + kToleranceEpsilon;
}

const std::vector<ToleranceRule>& tolerance_rules() {
  static const std::vector<ToleranceRule> rules = {
      {Variable::temperature, {{Unit::fahrenheit, 0.5}, {Unit::celsius, 0.3}}, 0.3, "+/-0.5 F, +/-0.3 C"},
      {Variable::hr, {{Unit::bpm, 5.0}}, 5.0, "+/-5 bpm"},
      {Variable::rr, {{Unit::breaths_per_min, 1.0}}, 1.0, "+/-1 breath/min"},
      {Variable::spo2, {{Unit::percent, 1.0}}, 1.0, "+/-1%"},
      {Variable::height, {{Unit::cm, 2.0}, {Unit::inch, 1.0}}, 2.0, "+/-2 cm, +/-1 inch"},
      {Variable::weight, {{Unit::kg, 2.0}, {Unit::lb, 5.0}}, 2.0, "+/-2 kg, +/-5 lbs"},
      {Variable::bp_sys, {{Unit::mmhg, 5.0}}, 5.0, "+/-5 mmHg"},
      {Variable::bp_dia, {{Unit::mmhg, 5.0}}, 5.0, "+/-5 mmHg"},
  };
  return rules;
}

const ToleranceRule& rule_for(Variable v) {
  for (const auto& r : tolerance_rules())
    if (r.variable == v) return r;
  throw InvalidInput("no tolerance rule for " + std::string(vitals::to_string(v)));
}

// ------------------------------------------------------------ truth files

TruthVitalsLoad load_truth_vitals(std::string_view csv_text) {
  auto t = csv::Table::parse(csv_text);
  const auto ch = t.require_column("hadm_id", "truth_vitals.csv");
  const auto cv = t.require_column("variable", "truth_vitals.csv");
  const auto cval = t.require_column("value", "truth_vitals.csv");
  const auto cu = t.require_column("unit", "truth_vitals.csv");
  const auto ct = t.column("charttime");
  TruthVitalsLoad out;
  for (const auto& r : t.rejects()) out.rejects.push_back("line " + std::to_string(r.line) + ": " + r.reason);
  for (const auto& r : t.rows()) {
    auto var = vitals::variable_from_string(r.fields[cv]);
    auto unit = vitals::unit_from_string(r.fields[cu]);
    auto value = parse_double(r.fields[cval]);
    if (!var || !unit || !value) {
      out.rejects.push_back("line " + std::to_string(r.line) + ": bad variable, unit or value");
      continue;
    }
    out.rows.push_back({r.fields[ch], *var, *value, *unit, ct ? r.fields[*ct] : ""});
  }
  return out;
}

TruthSdoh load_truth_sdoh(std::string_view csv_text) {
  auto t = csv::Table::parse(csv_text);
  const auto ch = t.require_column("hadm_id", "truth_sdoh.csv");
  const auto cv = t.require_column("variable", "truth_sdoh.csv");
  const auto cval = t.require_column("value", "truth_sdoh.csv");
  TruthSdoh out;
  for (const auto& r : t.rows()) {
    if (trim(r.fields[cval]).empty()) continue;
    out[to_lower(trim(r.fields[cv]))][r.fields[ch]] = trim(r.fields[cval]);
  }
  return out;
}

// ------------------------------------------------------------ vitals

namespace {

struct Side {
  double canonical = 0.0;
  std::optional<std::pair<Unit, double>> native;  // set when every value shares one unit
};

Side summarize_side(const std::vector<std::pair<Unit, double>>& values) {
  std::vector<double> canon, raw;
  for (const auto& [u, v] : values) {
    canon.push_back(vitals::to_canonical(v, u));
    raw.push_back(v);
  }
  Side s;
  s.canonical = median(canon);
  const Unit u0 = values.front().first;
  if (std::all_of(values.begin(), values.end(), [&](const auto& p) { return p.first == u0; }))
    s.native = std::make_pair(u0, median(raw));
  return s;
}

}  // namespace

std::optional<AgreementRow> evaluate_vital(Variable variable, const std::vector<vitals::CanonicalVital>& extracted,
                                           const std::vector<TruthVital>& truth, std::vector<std::string>& warnings) {
  const ToleranceRule& rule = rule_for(variable);
  std::map<HadmId, std::vector<std::pair<Unit, double>>> truth_by, ext_by;
  for (const auto& t : truth)
    if (t.variable == variable) truth_by[t.hadm_id].emplace_back(t.unit, t.value);
  if (truth_by.empty()) {
    warnings.push_back("no truth rows for " + std::string(vitals::to_string(variable)) + "; row omitted");
    return std::nullopt;
  }
  for (const auto& e : extracted)
    if (e.variable == variable && e.usable()) ext_by[e.hadm_id].emplace_back(e.original_unit, e.original_value);

  AgreementRow row;
  row.variable = std::string(vitals::to_string(variable));
  row.tolerance = rule.label;
  row.n_truth = truth_by.size();
  std::vector<double> abs_err, pct_err;
  for (const auto& [hadm, tvals] : truth_by) {
    auto it = ext_by.find(hadm);
    if (it == ext_by.end()) continue;
    ++row.n_extracted;
    const Side t = summarize_side(tvals);
    const Side e = summarize_side(it->second);
    bool hit;
    if (t.native && e.native && t.native->first == e.native->first && rule.bound_for(t.native->first))
      hit = rule.within(e.native->second, t.native->second, t.native->first);
    else
      hit = rule.within(e.canonical, t.canonical, vitals::canonical_unit(variable));
    row.n_hits += hit;
    const double d = std::fabs(e.canonical - t.canonical);
    abs_err.push_back(d);
    if (t.canonical != 0.0) pct_err.push_back(100.0 * d / std::fabs(t.canonical));
  }
  row.pct_extracted = 100.0 * static_cast<double>(row.n_extracted) / static_cast<double>(row.n_truth);
  row.cond_acc = row.n_extracted ? 100.0 * static_cast<double>(row.n_hits) / static_cast<double>(row.n_extracted) : 0.0;
  if (!abs_err.empty()) row.mae = mean(abs_err);
  if (!pct_err.empty()) row.mape = mean(pct_err);
  return row;
}

// ------------------------------------------------------------ categorical

namespace {

const std::map<std::string, std::string>& marital_synonyms() {
  static const std::map<std::string, std::string> m = {
      {"married", "married"},      {"marr", "married"},         {"wife", "married"},
      {"husband", "married"},      {"spouse", "married"},       {"single", "single"},
      {"nevermarried", "single"},  {"unmarried", "single"},     {"widowed", "widowed"},
      {"widow", "widowed"},        {"widower", "widowed"},      {"divorced", "divorced"},
      {"separated", "separated"},  {"lifepartner", "partner"},  {"partner", "partner"},
      {"domesticpartner", "partner"},
  };
  return m;
}

// MIMIC-III stores languages as four-letter codes.
const std::map<std::string, std::string>& language_synonyms() {
  static const std::map<std::string, std::string> m = {
      {"english", "engl"},    {"spanish", "span"},     {"russian", "russ"},    {"portuguese", "ptun"},
      {"portugese", "ptun"},  {"cantonese", "cant"},   {"mandarin", "mand"},   {"chinese", "mand"},
      {"haitian", "hait"},    {"creole", "hait"},      {"haitiancreole", "hait"}, {"italian", "ital"},
      {"vietnamese", "viet"}, {"greek", "gree"},       {"capeverdean", "cape"}, {"arabic", "arab"},
      {"persian", "pers"},    {"farsi", "pers"},       {"korean", "kore"},     {"french", "fren"},
      {"polish", "poli"},     {"albanian", "alba"},    {"asl", "amer"},        {"americansignlanguage", "amer"},
      {"cambodian", "camb"},  {"khmer", "camb"},       {"hindi", "hind"},      {"japanese", "japa"},
      {"thai", "thai"},       {"laotian", "laot"},     {"somali", "soma"},     {"bengali", "beng"},
      {"armenian", "arme"},   {"turkish", "turk"},     {"hebrew", "hebr"},     {"german", "germ"},
  };
  return m;
}

}  // namespace

std::optional<double> parse_age(const std::string& s) {
  const std::string t = trim(s);
  size_t i = 0;
  while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == '.')) ++i;
  if (i == 0) return std::nullopt;
  auto v = parse_double(t.substr(0, i));
  if (!v) return std::nullopt;
  size_t j = i;
  while (j < t.size() && std::isalpha(static_cast<unsigned char>(t[j]))) ++j;
  if (to_lower(t.substr(i, j - i)) == "s") return std::nullopt;
  return v;
}

std::string canonical_category(const std::string& variable, const std::string& value) {
  const std::string v = key_fold(value);
  const std::string var = key_fold(variable);
  if (var == "gender") {
    if (v == "m" || v == "male" || v == "man") return "m";
    if (v == "f" || v == "female" || v == "woman") return "f";
    return v;
  }
  if (var == "maritalstatus") {
    const auto& m = marital_synonyms();
    if (auto it = m.find(v); it != m.end()) return it->second;
    return v;
  }
  if (var == "language") {
    const auto& m = language_synonyms();
    if (auto it = m.find(v); it != m.end()) return it->second;
    return v;
  }
  if (var == "age") {
    if (auto a = parse_age(value)) return std::to_string(*a);
  }
  return v;
}

bool categorical_match(const std::string& variable, const std::string& extracted, const std::string& truth) {
  if (key_fold(variable) == "age") {
    auto e = parse_age(extracted);
    auto t = parse_age(truth);
    return e && t && std::fabs(*e - *t) <= 1.0 + kToleranceEpsilon;
  }
  const std::string e = canonical_category(variable, extracted);
  return !e.empty() && e == canonical_category(variable, truth);
}

AgreementRow evaluate_categorical(const std::string& variable, const std::map<HadmId, std::optional<std::string>>& extracted,
                                  const std::map<HadmId, std::string>& truth) {
  AgreementRow row;
  row.variable = variable;
  row.categorical = true;
  row.tolerance = key_fold(variable) == "age" ? "+/-1 year" : "--";
  row.n_truth = truth.size();
  for (const auto& [hadm, t] : truth) {
    auto it = extracted.find(hadm);
    if (it == extracted.end() || !it->second) continue;
    ++row.n_extracted;
    row.n_hits += categorical_match(variable, *it->second, t);
  }
  if (row.n_truth) row.pct_extracted = 100.0 * static_cast<double>(row.n_extracted) / static_cast<double>(row.n_truth);
  if (row.n_extracted) row.cond_acc = 100.0 * static_cast<double>(row.n_hits) / static_cast<double>(row.n_extracted);
  return row;
}

AgreementReport evaluate_agreement(const std::vector<extract::ExtractionRecord>& records,
                                   const std::vector<vitals::CanonicalVital>& canonical,
                                   const std::vector<TruthVital>& truth_vitals, const TruthSdoh& truth_sdoh) {
  AgreementReport rep;
  for (Variable v : vitals::kAllVariables)
    if (auto row = evaluate_vital(v, canonical, truth_vitals, rep.warnings)) rep.rows.push_back(*row);
  using extract::Field;
  for (Field f : {Field::gender, Field::age, Field::language, Field::marital_status}) {
    const std::string name(extract::info(f).name);
    auto it = truth_sdoh.find(name);
    if (it == truth_sdoh.end() || it->second.empty()) {
      rep.warnings.push_back("no truth rows for " + name + "; row omitted");
      continue;
    }
    std::map<HadmId, std::optional<std::string>> ext;
    for (const auto& r : records) ext[r.hadm_id] = r.get(f);
    rep.rows.push_back(evaluate_categorical(name, ext, it->second));
  }
  return rep;
}

json to_json(const AgreementReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = {{"variable", row.variable},     {"kind", row.categorical ? "categorical" : "vital"},
              {"tolerance", row.tolerance},   {"n_truth", row.n_truth},
              {"n_extracted", row.n_extracted}, {"n_within_tolerance", row.n_hits},
              {"pct_extracted", row.pct_extracted}, {"cond_acc", row.cond_acc}};
    j["mae"] = row.mae ? json(*row.mae) : json(nullptr);
    j["mape"] = row.mape ? json(*row.mape) : json(nullptr);
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}, {"warnings", r.warnings}};
}

// ------------------------------------------------------------ judge

IcdDescriptions IcdDescriptions::parse(std::string_view csv_text) {
  auto t = csv::Table::parse(csv_text);
  const auto cc = t.require_column("icd9_code", "icd9_descriptions.csv");
  auto cd = t.column("long_title");
  if (!cd) cd = t.require_column("description", "icd9_descriptions.csv");
  IcdDescriptions out;
  for (const auto& r : t.rows()) {
    std::string code = replace_all(trim(r.fields[cc]), ".", "");
    out.table_[code] = trim(r.fields[*cd]);
  }
  return out;
}

IcdDescriptions IcdDescriptions::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string IcdDescriptions::describe(const std::string& code) const {
  auto it = table_.find(replace_all(trim(code), ".", ""));
  return it == table_.end() ? code : it->second;
}

std::optional<double> JudgeVerdict::cond_acc() const {
  if (n_extracted == 0) return std::nullopt;
  return static_cast<double>(matched_extracted) / static_cast<double>(n_extracted);
}

std::optional<double> JudgeVerdict::abs_acc() const {
  if (n_icd == 0) return std::nullopt;
  return static_cast<double>(matched_icd) / static_cast<double>(n_icd);
}

std::vector<std::string> diagnosis_strings(const std::vector<extract::Diagnosis>& dx) {
  std::vector<std::string> out;
  for (const auto& d : dx) out.push_back(d.details.empty() ? d.condition : d.condition + " (" + d.details + ")");
  return out;
}

std::string judge_request_content(const JudgeItem& item) {
  std::string s = "Extracted diagnoses:\n";
  for (size_t i = 0; i < item.extracted.size(); ++i) s += std::to_string(i) + ". " + item.extracted[i] + "\n";
  s += "\nICD-9 diagnoses:\n";
  for (size_t i = 0; i < item.icd.size(); ++i) s += std::to_string(i) + ". " + item.icd[i] + "\n";
  return s;
}

namespace {

std::optional<long long> as_index(const json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == std::floor(d)) return static_cast<long long>(d);
  }
  if (v.is_string())
    if (auto d = parse_double(v.get<std::string>()); d && *d == std::floor(*d)) return static_cast<long long>(*d);
  return std::nullopt;
}

}  // namespace

JudgeVerdict parse_judge_reply(const JudgeItem& item, const std::string& reply) {
  auto j = find_json_object(reply);
  if (!j) throw JudgeReplyInvalid("no JSON object in reply");
  if (!j->contains("score")) throw JudgeReplyInvalid("missing score");
  auto score = as_index((*j)["score"]);
  if (!score || *score < 0 || *score > 5) throw JudgeReplyInvalid("score must be an integer 0-5");
  JudgeVerdict v;
  v.hadm_id = item.hadm_id;
  v.score = static_cast<int>(*score);
  v.n_extracted = item.extracted.size();
  v.n_icd = item.icd.size();
  const json matches = j->value("matches", json::array());
  if (!matches.is_array()) throw JudgeReplyInvalid("matches must be a list");
  std::set<std::pair<size_t, size_t>> pairs;
  for (const auto& m : matches) {
    std::optional<long long> e, c;
    if (m.is_object()) {
      if (m.contains("extracted_index")) e = as_index(m["extracted_index"]);
      if (m.contains("icd_index")) c = as_index(m["icd_index"]);
    } else if (m.is_array() && m.size() == 2) {
      e = as_index(m[0]);
      c = as_index(m[1]);
    }
    if (!e || !c) throw JudgeReplyInvalid("match entries need extracted_index and icd_index");
    if (*e < 0 || static_cast<size_t>(*e) >= v.n_extracted || *c < 0 || static_cast<size_t>(*c) >= v.n_icd)
      throw JudgeReplyInvalid("match index out of range");
    pairs.emplace(static_cast<size_t>(*e), static_cast<size_t>(*c));
  }
  std::set<size_t> seen_e, seen_c;
  for (const auto& [e, c] : pairs) {
    if (!seen_e.insert(e).second) throw JudgeReplyInvalid("extracted item " + std::to_string(e) + " matched twice");
    if (!seen_c.insert(c).second) throw JudgeReplyInvalid("ICD item " + std::to_string(c) + " matched twice");
    v.matches.emplace_back(e, c);
  }
  v.matched_extracted = seen_e.size();
  v.matched_icd = seen_c.size();
  return v;
}

std::vector<JudgeOutcome> judge_all(llm::Gateway& gateway, const JudgeConfig& config, const std::vector<JudgeItem>& items) {
  std::vector<std::optional<JudgeOutcome>> out(items.size());
  std::vector<size_t> idx;
  std::vector<llm::ChatRequest> reqs;
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].extracted.empty() || items[i].icd.empty()) {
      JudgeVerdict v;
      v.hadm_id = items[i].hadm_id;
      v.n_extracted = items[i].extracted.size();
      v.n_icd = items[i].icd.size();
      out[i] = v;
      continue;
    }
    llm::ChatRequest r;
    r.system_prompt = config.system_prompt;
    r.user_content = judge_request_content(items[i]);
    r.temperature = config.temperature;
    r.max_tokens = config.max_tokens;
    r.task = "judge";
    idx.push_back(i);
    reqs.push_back(std::move(r));
  }

  std::vector<std::vector<std::string>> raws(items.size());
  std::vector<std::string> problems(items.size());
  auto absorb = [&](const std::vector<size_t>& which, const std::vector<llm::ChatOutcome>& outcomes,
                    std::vector<size_t>* retry) {
    for (size_t k = 0; k < which.size(); ++k) {
      const size_t i = which[k];
      if (!outcomes[k].ok()) {
        out[i] = JudgeFailure{items[i].hadm_id, outcomes[k].error_kind + ": " + outcomes[k].error_message, raws[i]};
        continue;
      }
      raws[i].push_back(outcomes[k].response->raw_text);
      try {
        out[i] = parse_judge_reply(items[i], outcomes[k].response->raw_text);
      } catch (const JudgeReplyInvalid& e) {
        problems[i] = e.message();
        if (retry)
          retry->push_back(i);
        else
          out[i] = JudgeFailure{items[i].hadm_id, problems[i], raws[i]};
      }
    }
  };

  std::vector<size_t> retry;
  absorb(idx, gateway.chat_batch(reqs), &retry);
  if (!retry.empty()) {
    std::vector<llm::ChatRequest> repairs;
    for (size_t i : retry) {
      llm::ChatRequest r;
      r.system_prompt = config.system_prompt;
      r.user_content = judge_request_content(items[i]) + "\n---\nYour previous reply could not be used (" +
                       problems[i] + "). Previous reply:\n" + raws[i].back() +
                       "\n---\nReturn only valid JSON as specified.";
      r.temperature = config.temperature;
      r.max_tokens = config.max_tokens;
      r.task = "judge";
      repairs.push_back(std::move(r));
    }
    absorb(retry, gateway.chat_batch(repairs), nullptr);
  }

  std::vector<JudgeOutcome> result;
  result.reserve(items.size());
  for (auto& o : out) result.push_back(std::move(*o));
  return result;
}

JudgeVerdict judge_diagnoses(llm::Gateway& gateway, const JudgeConfig& config, const JudgeItem& item) {
  auto outcome = judge_all(gateway, config, {item}).front();
  if (auto* f = std::get_if<JudgeFailure>(&outcome)) throw JudgeFailed(item.hadm_id + ": " + f->reason);
  return std::get<JudgeVerdict>(outcome);
}

JudgeSummary corpus_judge_summary(const std::vector<JudgeVerdict>& verdicts, bool macro) {
  if (verdicts.empty()) throw InvalidInput("corpus_judge_summary needs at least one verdict");
  JudgeSummary s;
  s.macro = macro;
  s.n_verdicts = verdicts.size();
  std::vector<double> scores, n_ext, n_icd, cond, abs;
  size_t me = 0, ne = 0, mi = 0, ni = 0;
  for (const auto& v : verdicts) {
    scores.push_back(v.score);
    n_ext.push_back(static_cast<double>(v.n_extracted));
    n_icd.push_back(static_cast<double>(v.n_icd));
    me += v.matched_extracted;
    ne += v.n_extracted;
    mi += v.matched_icd;
    ni += v.n_icd;
    if (auto c = v.cond_acc()) cond.push_back(*c);
    if (auto a = v.abs_acc()) abs.push_back(*a);
  }
  s.mean_score = mean(scores);
  s.median_score = median(scores);
  s.avg_n_extracted = mean(n_ext);
  s.avg_n_icd = mean(n_icd);
  if (macro) {
    s.cond_acc = cond.empty() ? 0.0 : mean(cond);
    s.abs_acc = abs.empty() ? 0.0 : mean(abs);
  } else {
    s.cond_acc = ne ? static_cast<double>(me) / static_cast<double>(ne) : 0.0;
    s.abs_acc = ni ? static_cast<double>(mi) / static_cast<double>(ni) : 0.0;
  }
  return s;
}

json to_json(const JudgeVerdict& v) {
  json m = json::array();
  for (const auto& [e, c] : v.matches) m.push_back({{"extracted_index", e}, {"icd_index", c}});
  return {{"hadm_id", v.hadm_id},
          {"score", v.score},
          {"matched_extracted", v.matched_extracted},
          {"matched_icd", v.matched_icd},
          {"n_extracted", v.n_extracted},
          {"n_icd", v.n_icd},
          {"matches", m}};
}

json to_json(const JudgeSummary& s) {
  return {{"n_verdicts", s.n_verdicts},     {"n_failed", s.n_failed},
          {"mean_score", s.mean_score},     {"median_score", s.median_score},
          {"cond_acc", s.cond_acc},         {"abs_acc", s.abs_acc},
          {"avg_n_extracted", s.avg_n_extracted}, {"avg_n_icd", s.avg_n_icd},
          {"averaging", s.macro ? "macro" : "micro"}};
}

}  // namespace clinnote::fidelity
