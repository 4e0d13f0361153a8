#include "clinnote/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>

#include "clinnote/cohort.hpp"
#include "clinnote/csv.hpp"
#include "clinnote/extractor.hpp"
#include "clinnote/fidelity.hpp"
#include "clinnote/mock_agents.hpp"
#include "clinnote/normalizer.hpp"
#include "clinnote/predictor.hpp"
#include "clinnote/stats.hpp"
#include "clinnote/summarizer.hpp"
#include "clinnote/vitals.hpp"

#ifndef CLINNOTE_PROMPTS_DIR
#define CLINNOTE_PROMPTS_DIR "prompts"
#endif
#ifndef CLINNOTE_DATA_DIR
#define CLINNOTE_DATA_DIR "data"
#endif

namespace clinnote::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ stages

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::extract: return "extract";
    case Stage::canonicalize: return "canonicalize";
    case Stage::normalize: return "normalize";
    case Stage::evaluate_fidelity: return "evaluate-fidelity";
    case Stage::associate: return "associate";
    case Stage::summarize: return "summarize";
    case Stage::predict: return "predict";
  }
  return "";
}

std::optional<Stage> stage_from_string(std::string_view s) {
  for (Stage st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::vector<Stage> dependencies(Stage s) {
  switch (s) {
    case Stage::ingest: return {};
    case Stage::extract: return {Stage::ingest};
    case Stage::canonicalize: return {Stage::extract};
    case Stage::normalize: return {Stage::extract};
    case Stage::summarize: return {Stage::extract};
    case Stage::evaluate_fidelity: return {Stage::canonicalize};
    case Stage::associate: return {Stage::canonicalize, Stage::normalize};
    case Stage::predict: return {Stage::summarize, Stage::extract};
  }
  return {};
}

std::vector<std::string> stage_outputs(Stage s) {
  switch (s) {
    case Stage::ingest: return {"cohort.jsonl", "pairs.csv", "cohort_summary.json"};
    case Stage::extract: return {"extractions.jsonl", "quarantine.jsonl", "extraction_report.json"};
    case Stage::canonicalize: return {"canonical_vitals.csv", "canonicalize_report.json"};
    case Stage::normalize: return {"schemes.json", "normalized_sdoh.csv", "normalize_report.json"};
    case Stage::evaluate_fidelity: return {"agreement_report.json", "judge_report.json"};
    case Stage::associate: return {"association_report.json"};
    case Stage::summarize: return {"summaries.jsonl", "summary_report.json"};
    case Stage::predict: return {"prediction_report.json", "prediction_scores.csv"};
  }
  return {};
}

// ------------------------------------------------------------ config

const json& default_config() {
  static const json d = {
      {"seed", 7},
      {"k_medoids", normalize::kDefaultK},
      {"folds", 5},
      {"l2_lambda", 1.0},
      {"standardize", true},
      {"judge_macro_average", false},
      {"data",
       {{"admissions", "admissions.csv"},
        {"diagnoses", "diagnoses.csv"},
        {"notes", "notes.csv"},
        {"truth_vitals", "truth_vitals.csv"},
        {"truth_sdoh", "truth_sdoh.csv"},
        {"icd9_descriptions", ""}}},
      {"prompts_dir", ""},
      {"mock_transcript", "mock_transcript.jsonl"},
      {"normalize_variables",
       {"language", "marital_status", "alcohol_use", "tobacco_use", "drug_use", "transportation", "housing",
        "parental", "employment_status", "social_support"}},
      {"predict_variants", {"raw", "overall", "no_number", "structural"}},
      {"agents",
       {{"extractor", {{"temperature", 0.0}, {"max_tokens", 8192}}},
        {"normalizer", {{"temperature", 0.0}, {"max_tokens", 4096}}},
        {"labeler", {{"temperature", 0.0}, {"max_tokens", 2048}}},
        {"judge", {{"temperature", 0.0}, {"max_tokens", 4096}}},
        {"summarizer", {{"temperature", 0.3}, {"max_tokens", 4096}}}}},
      {"llm",
       {{"endpoint_url", "http://localhost:8000/v1"},
        {"api_key_env", ""},
        {"chat_model", "Qwen3-14B"},
        {"embed_model", "text-embedding"},
        {"max_concurrency", 4},
        {"max_retries", 3},
        {"backoff_ms", 500},
        {"timeout_s", 300},
        {"cache_path", ""}}},
  };
  return d;
}

namespace {

std::string type_name(const json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "list";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_null()) return "null";
  return "value";
}

json merge_checked(const json& def, const json& user, const std::string& path) {
  if (!user.is_object())
    throw ConfigError("type mismatch at " + (path.empty() ? std::string("<root>") : path) + ": expected object, got " +
                      type_name(user));
  json out = def;
  for (const auto& [key, value] : user.items()) {
    const std::string kp = path.empty() ? key : path + "." + key;
    if (!def.contains(key)) throw ConfigError("unknown key: " + kp);
    const json& d = def[key];
    auto mismatch = [&](const std::string& expected) {
      return ConfigError("type mismatch at " + kp + ": expected " + expected + ", got " + type_name(value));
    };
    if (d.is_object()) {
      out[key] = merge_checked(d, value, kp);
    } else if (d.is_boolean()) {
      if (!value.is_boolean()) throw mismatch("boolean");
      out[key] = value;
    } else if (d.is_number_integer()) {
      if (!value.is_number_integer()) throw mismatch("integer");
      out[key] = value;
    } else if (d.is_number()) {
      if (!value.is_number()) throw mismatch("number");
      out[key] = value.get<double>();
    } else if (d.is_string()) {
      if (!value.is_string()) throw mismatch("string");
      out[key] = value;
    } else if (d.is_array()) {
      if (!value.is_array()) throw mismatch("list of strings");
      for (const auto& v : value)
        if (!v.is_string()) throw mismatch("list of strings");
      out[key] = value;
    }
  }
  return out;
}

fs::path resolve(const std::string& p, const fs::path& base, const fs::path& fallback) {
  if (p.empty()) return fallback;
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError("invalid value at " + key + ": " + rule);
}

std::string now_iso() {
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  return cohort::format_timestamp({secs});
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) out.push_back(json::parse(line));
  return out;
}

template <class T, class F>
std::string to_jsonl(const std::vector<T>& items, F&& conv) {
  std::string s;
  for (const auto& it : items) {
    s += conv(it).dump();
    s += '\n';
  }
  return s;
}

std::string file_hash_or_missing(const fs::path& p) { return fs::exists(p) ? sha256_file(p) : "missing"; }

const std::set<std::string>& normalizable_fields() {
  static const std::set<std::string> s = {"language",       "marital_status", "alcohol_use", "tobacco_use",
                                          "drug_use",       "transportation", "housing",     "parental",
                                          "employment_status", "social_support"};
  return s;
}

}  // namespace

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
  const json eff = merge_checked(default_config(), doc, "");
  PipelineConfig c;
  require(eff["seed"].get<long long>() >= 0, "seed", "must be non-negative");
  c.seed = eff["seed"].get<std::uint64_t>();
  c.k_medoids = eff["k_medoids"].get<int>();
  require(c.k_medoids >= 1, "k_medoids", "must be at least 1");
  c.folds = eff["folds"].get<int>();
  require(c.folds >= 2, "folds", "must be at least 2");
  c.l2_lambda = eff["l2_lambda"].get<double>();
  require(c.l2_lambda >= 0, "l2_lambda", "must be non-negative");
  c.standardize = eff["standardize"].get<bool>();
  c.judge_macro_average = eff["judge_macro_average"].get<bool>();

  const auto& d = eff["data"];
  c.admissions = resolve(d["admissions"], base_dir, {});
  c.diagnoses = resolve(d["diagnoses"], base_dir, {});
  c.notes = resolve(d["notes"], base_dir, {});
  c.truth_vitals = resolve(d["truth_vitals"], base_dir, {});
  c.truth_sdoh = resolve(d["truth_sdoh"], base_dir, {});
  c.icd9_descriptions = resolve(d["icd9_descriptions"], base_dir, fs::path(CLINNOTE_DATA_DIR) / "icd9_descriptions.csv");
  c.prompts_dir = resolve(eff["prompts_dir"], base_dir, fs::path(CLINNOTE_PROMPTS_DIR));
  c.mock_transcript = resolve(eff["mock_transcript"], base_dir, {});

  for (const auto& v : eff["normalize_variables"]) {
    const auto name = v.get<std::string>();
    require(normalizable_fields().count(name) > 0, "normalize_variables", "unknown variable '" + name + "'");
    c.normalize_variables.push_back(name);
  }
  for (const auto& v : eff["predict_variants"]) {
    const auto name = v.get<std::string>();
    require(name == "raw" || summarize::variant_from_string(name).has_value(), "predict_variants",
            "unknown variant '" + name + "'");
    c.predict_variants.push_back(name);
  }
  for (const auto& [name, a] : eff["agents"].items()) {
    AgentSettings s{a["temperature"].get<double>(), a["max_tokens"].get<int>()};
    require(s.temperature >= 0 && s.temperature <= 2, "agents." + name + ".temperature", "must be in [0, 2]");
    require(s.max_tokens >= 1, "agents." + name + ".max_tokens", "must be positive");
    c.agents[name] = s;
  }
  const auto& l = eff["llm"];
  c.endpoint_url = l["endpoint_url"];
  c.api_key_env = l["api_key_env"];
  c.chat_model = l["chat_model"];
  c.embed_model = l["embed_model"];
  c.max_concurrency = l["max_concurrency"];
  require(c.max_concurrency >= 1, "llm.max_concurrency", "must be at least 1");
  c.max_retries = l["max_retries"];
  require(c.max_retries >= 0, "llm.max_retries", "must be non-negative");
  c.backoff_ms = l["backoff_ms"];
  require(c.backoff_ms >= 0, "llm.backoff_ms", "must be non-negative");
  c.timeout_s = l["timeout_s"];
  require(c.timeout_s >= 1, "llm.timeout_s", "must be positive");
  if (!l["cache_path"].get<std::string>().empty()) c.cache_path = resolve(l["cache_path"], base_dir, {});

  c.effective = eff;
  c.effective["data"] = {{"admissions", c.admissions.string()},
                         {"diagnoses", c.diagnoses.string()},
                         {"notes", c.notes.string()},
                         {"truth_vitals", c.truth_vitals.string()},
                         {"truth_sdoh", c.truth_sdoh.string()},
                         {"icd9_descriptions", c.icd9_descriptions.string()}};
  c.effective["prompts_dir"] = c.prompts_dir.string();
  c.effective["mock_transcript"] = c.mock_transcript.string();
  c.hash = sha256_hex(c.effective.dump());
  return c;
}

PipelineConfig validate_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(doc, fs::absolute(path).parent_path());
}

// ------------------------------------------------------------ pipeline

Pipeline::Pipeline(PipelineConfig config, fs::path out_dir, RunOptions options)
    : config_(std::move(config)), out_(std::move(out_dir)), options_(options) {
  if (options_.seed) {
    config_.seed = *options_.seed;
    config_.effective["seed"] = config_.seed;
    config_.hash = sha256_hex(config_.effective.dump());
  }
  prompts_ = PromptSet::load(config_.prompts_dir);
  fs::create_directories(out_);
}

llm::Gateway& Pipeline::gateway() {
  if (gateway_) return *gateway_;
  llm::GatewayConfig gc;
  gc.chat_model = options_.mock ? "mock" : config_.chat_model;
  gc.embed_model = options_.mock ? "mock-embedding" : config_.embed_model;
  gc.max_concurrency = config_.max_concurrency;
  if (!config_.cache_path.empty()) gc.cache_path = config_.cache_path;
  std::shared_ptr<llm::Backend> backend;
  if (options_.mock) {
    auto mock = std::make_shared<llm::MockBackend>(config_.seed);
    if (!fs::exists(config_.mock_transcript))
      throw ConfigError("mock_transcript not found: " + config_.mock_transcript.string());
    mock->load_transcript(config_.mock_transcript);
    mock::install_responders(*mock);
    backend = mock;
  } else {
    llm::HttpConfig hc;
    hc.endpoint_url = config_.endpoint_url;
    if (!config_.api_key_env.empty()) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      if (!key) throw ConfigError("llm.api_key_env names an unset variable: " + config_.api_key_env);
      hc.api_key = key;
    }
    hc.max_retries = config_.max_retries;
    hc.backoff_ms = config_.backoff_ms;
    hc.timeout_s = config_.timeout_s;
    hc.seed = static_cast<std::int64_t>(config_.seed);
    backend = std::make_shared<llm::HttpBackend>(hc);
  }
  gateway_ = std::make_unique<llm::Gateway>(gc, backend);
  return *gateway_;
}

json Pipeline::manifest() const {
  const fs::path p = out(kManifestName);
  if (!fs::exists(p)) return json::object();
  return json::parse(read_file(p));
}

void Pipeline::write_manifest(const json& manifest) const {
  write_file_atomic(out(kManifestName), manifest.dump(2) + "\n");
}

void Pipeline::write(const std::string& name, std::string_view content, std::map<std::string, std::string>& hashes) {
  write_file_atomic(out(name), content);
  hashes[name] = sha256_hex(content);
}

std::string Pipeline::input_fingerprint(Stage stage) const {
  json fp = {{"stage", to_string(stage)}, {"config", config_.hash}, {"mock", options_.mock}};
  json prompts = json::object();
  for (const auto& [name, p] : prompts_.all()) prompts[name] = p.sha256;
  fp["prompts"] = prompts;
  json deps = json::object();
  for (Stage d : dependencies(stage))
    for (const auto& f : stage_outputs(d)) deps[f] = file_hash_or_missing(out(f));
  // Stages also read outputs of indirect prerequisites.
  if (stage == Stage::evaluate_fidelity || stage == Stage::associate || stage == Stage::summarize ||
      stage == Stage::predict)
    for (const auto& f : stage_outputs(Stage::ingest)) deps[f] = file_hash_or_missing(out(f));
  if (stage == Stage::evaluate_fidelity || stage == Stage::associate)
    for (const auto& f : stage_outputs(Stage::extract)) deps[f] = file_hash_or_missing(out(f));
  fp["deps"] = deps;
  json data = json::object();
  if (stage == Stage::ingest) {
    data["admissions"] = file_hash_or_missing(config_.admissions);
    data["diagnoses"] = file_hash_or_missing(config_.diagnoses);
    data["notes"] = file_hash_or_missing(config_.notes);
  }
  if (stage == Stage::evaluate_fidelity) {
    data["truth_vitals"] = file_hash_or_missing(config_.truth_vitals);
    data["truth_sdoh"] = file_hash_or_missing(config_.truth_sdoh);
    data["icd9_descriptions"] = file_hash_or_missing(config_.icd9_descriptions);
  }
  if (options_.mock) data["mock_transcript"] = file_hash_or_missing(config_.mock_transcript);
  fp["data"] = data;
  return sha256_hex(fp.dump());
}

StageResult Pipeline::run_stage(Stage stage) {
  for (Stage d : dependencies(stage))
    for (const auto& f : stage_outputs(d))
      if (!fs::exists(out(f))) throw DependencyMissing(std::string(to_string(d)), f + " not found");

  const std::string fp = input_fingerprint(stage);
  json man = manifest();
  const std::string name(to_string(stage));
  if (man.contains("stages") && man["stages"].contains(name)) {
    const json& prev = man["stages"][name];
    bool same = prev.value("inputs_sha256", "") == fp;
    for (const auto& f : stage_outputs(stage)) {
      if (!same) break;
      same = fs::exists(out(f)) && prev["outputs"].value(f, "") == sha256_file(out(f));
    }
    if (same) return {stage, true, prev};
  }

  const auto before = gateway_ ? gateway_->stats() : llm::GatewayStats{};
  std::map<std::string, std::string> hashes;
  json entry;
  entry["started_at"] = now_iso();
  json summary;
  switch (stage) {
    case Stage::ingest: summary = run_ingest(hashes); break;
    case Stage::extract: summary = run_extract(hashes); break;
    case Stage::canonicalize: summary = run_canonicalize(hashes); break;
    case Stage::normalize: summary = run_normalize(hashes); break;
    case Stage::evaluate_fidelity: summary = run_evaluate_fidelity(hashes); break;
    case Stage::associate: summary = run_associate(hashes); break;
    case Stage::summarize: summary = run_summarize(hashes); break;
    case Stage::predict: summary = run_predict(hashes); break;
  }
  const auto after = gateway_ ? gateway_->stats() : llm::GatewayStats{};
  entry["finished_at"] = now_iso();
  entry["inputs_sha256"] = fp;
  entry["outputs"] = hashes;
  entry["summary"] = summary;
  entry["gateway"] = {{"backend_calls", after.backend_calls - before.backend_calls},
                      {"cache_hits", after.cache_hits - before.cache_hits},
                      {"embed_backend_calls", after.embed_backend_calls - before.embed_backend_calls},
                      {"embed_cache_hits", after.embed_cache_hits - before.embed_cache_hits}};

  man["run_id"] = sha256_hex(config_.hash + (options_.mock ? ":mock" : ":live")).substr(0, 16);
  man["config_sha256"] = config_.hash;
  man["seed"] = config_.seed;
  man["mock"] = options_.mock;
  json prompts = json::object();
  for (const auto& [pn, p] : prompts_.all()) prompts[pn] = p.sha256;
  man["prompts"] = prompts;
  man["stages"][name] = entry;
  json files = json::object();
  for (const auto& e : fs::directory_iterator(out_)) {
    if (!e.is_regular_file()) continue;
    const std::string fname = e.path().filename().string();
    if (fname == kManifestName) continue;
    files[fname] = sha256_file(e.path());
  }
  man["files"] = files;
  write_manifest(man);
  return {stage, false, entry};
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (Stage s : kAllStages) out.push_back(run_stage(s));
  return out;
}

// ------------------------------------------------------------ stage bodies

namespace {

std::vector<cohort::AdmissionRecord> load_cohort(const fs::path& p) {
  std::vector<cohort::AdmissionRecord> out;
  for (const auto& j : read_jsonl(p)) out.push_back(cohort::admission_from_json(j));
  return out;
}

std::vector<extract::ExtractionRecord> load_records(const fs::path& p) {
  std::vector<extract::ExtractionRecord> out;
  for (const auto& j : read_jsonl(p)) out.push_back(extract::record_from_json(j));
  return out;
}

const std::vector<extract::Field>& vital_fields() {
  using extract::Field;
  static const std::vector<Field> f = {Field::body_temperature, Field::heart_rate, Field::respiration_rate,
                                       Field::blood_pressure,   Field::spo2,       Field::height,
                                       Field::weight};
  return f;
}

json error_json(const std::string& subject, const Error& e) {
  return {{"variable", subject}, {"error", e.kind()}, {"message", e.message()}};
}

}  // namespace

json Pipeline::run_ingest(std::map<std::string, std::string>& hashes) {
  for (const auto& p : {config_.admissions, config_.diagnoses, config_.notes})
    if (!fs::exists(p)) throw StageFailed("input table not found: " + p.string());
  auto loaded = cohort::load_tables(config_.admissions, config_.diagnoses, config_.notes);
  const auto hf = cohort::filter_hf_cohort(loaded.store);
  const auto pairs = cohort::build_readmission_pairs(hf);
  const auto summary = cohort::summarize_cohort(hf, pairs.pairs);

  write("cohort.jsonl", to_jsonl(hf.admissions(), [](const auto& a) { return cohort::to_json(a); }), hashes);
  write("pairs.csv", cohort::pairs_to_csv(pairs.pairs), hashes);
  json rejects = json::array();
  for (const auto& r : loaded.rejects) rejects.push_back({{"table", r.table}, {"line", r.line}, {"reason", r.reason}});
  json skipped = json::array();
  for (const auto& s : pairs.skipped)
    skipped.push_back({{"index_hadm_id", s.index_hadm_id}, {"next_hadm_id", s.next_hadm_id}, {"interval_days", s.interval_days}});
  json report = {{"cohort", cohort::to_json(summary)},
                 {"n_loaded_admissions", loaded.store.size()},
                 {"n_loaded_patients", loaded.store.patient_count()},
                 {"rejects", rejects},
                 {"skipped_pairs", skipped}};
  write("cohort_summary.json", report.dump(2) + "\n", hashes);
  return {{"admissions", hf.size()}, {"pairs", pairs.pairs.size()}, {"rejects", loaded.rejects.size()}};
}

json Pipeline::run_extract(std::map<std::string, std::string>& hashes) {
  const auto admissions = load_cohort(out("cohort.jsonl"));
  std::vector<extract::NoteInput> notes;
  for (const auto& a : admissions)
    if (a.discharge_note && !trim(*a.discharge_note).empty()) notes.push_back({a.hadm_id, *a.discharge_note});
  const auto& s = config_.agents.at("extractor");
  const extract::ExtractorConfig ec{prompts_.get("extractor").text, s.temperature, s.max_tokens};
  const auto outcomes = extract::extract_all(gateway(), ec, notes);

  std::vector<extract::ExtractionRecord> records;
  std::vector<extract::QuarantinedExtraction> quarantined;
  for (const auto& o : outcomes) {
    if (const auto* r = std::get_if<extract::ExtractionRecord>(&o))
      records.push_back(*r);
    else
      quarantined.push_back(std::get<extract::QuarantinedExtraction>(o));
  }
  write("extractions.jsonl", to_jsonl(records, [](const auto& r) { return extract::to_json(r); }), hashes);
  write("quarantine.jsonl", to_jsonl(quarantined, [](const auto& q) { return extract::to_json(q); }), hashes);
  json coverage = json::object();
  if (!records.empty()) {
    for (const auto& fi : extract::field_table())
      coverage[std::string(fi.name)] = extract::extraction_coverage(records, fi.name);
    coverage["diagnoses"] = extract::extraction_coverage(records, "diagnoses");
  }
  json report = {{"n_notes", notes.size()},
                 {"n_records", records.size()},
                 {"n_quarantined", quarantined.size()},
                 {"coverage_pct", coverage}};
  write("extraction_report.json", report.dump(2) + "\n", hashes);
  return {{"notes", notes.size()}, {"records", records.size()}, {"quarantined", quarantined.size()}};
}

json Pipeline::run_canonicalize(std::map<std::string, std::string>& hashes) {
  const auto records = load_records(out("extractions.jsonl"));
  std::vector<vitals::CanonicalVital> rows;
  for (const auto& r : records)
    for (auto f : vital_fields())
      if (const auto& v = r.get(f)) {
        auto parsed = vitals::parse_vital(extract::info(f).name, *v, r.hadm_id);
        rows.insert(rows.end(), parsed.begin(), parsed.end());
      }
  write("canonical_vitals.csv", vitals::to_csv(rows), hashes);
  std::map<std::string, std::map<std::string, size_t>> counts;
  for (const auto& row : rows) ++counts[std::string(vitals::to_string(row.variable))][std::string(vitals::to_string(row.status))];
  json report = {{"n_values", rows.size()}, {"status_counts", counts}};
  write("canonicalize_report.json", report.dump(2) + "\n", hashes);
  return {{"values", rows.size()}};
}

json Pipeline::run_normalize(std::map<std::string, std::string>& hashes) {
  const auto records = load_records(out("extractions.jsonl"));
  const auto& ns = config_.agents.at("normalizer");
  const auto& ls = config_.agents.at("labeler");
  const normalize::AgentConfig scheme_cfg{prompts_.get("normalizer").text, ns.temperature, ns.max_tokens};
  const normalize::AgentConfig label_cfg{prompts_.get("labeler").text, ls.temperature, ls.max_tokens};

  json schemes = json::object();
  json report = json::object();
  std::vector<normalize::LabeledEntry> all_labeled;
  for (const auto& var : config_.normalize_variables) {
    const auto field = extract::field_by_name(var);
    std::vector<normalize::EntryInput> entries;
    for (const auto& r : records)
      if (const auto& v = r.get(*field)) entries.push_back({r.hadm_id, *v});
    json vr = {{"n_entries", entries.size()}};
    if (entries.empty()) {
      vr["status"] = "skipped";
      vr["reason"] = "no non-null entries";
      report[var] = vr;
      continue;
    }
    std::vector<std::string> texts;
    for (const auto& e : entries) texts.push_back(e.raw_text);
    try {
      const auto clusters = normalize::cluster_entries(gateway(), texts, config_.k_medoids, config_.seed);
      auto scheme = normalize::synthesize_scheme(gateway(), scheme_cfg, var, clusters.medoid_texts());
      scheme.normalizer_prompt_sha256 = prompts_.get("normalizer").sha256;
      scheme.labeler_prompt_sha256 = prompts_.get("labeler").sha256;
      auto labeled = normalize::label_entries(gateway(), label_cfg, scheme, entries);
      json sj = normalize::to_json(scheme);
      json hist = json::object();
      for (const auto& [size, count] : clusters.size_histogram) hist[std::to_string(size)] = count;
      sj["clustering"] = {{"k_requested", clusters.k_requested},
                          {"k_used", clusters.clustering.k},
                          {"k_lowered", clusters.k_lowered},
                          {"distinct_entries", clusters.distinct_entries.size()},
                          {"total_cost", clusters.clustering.total_cost},
                          {"cluster_size_histogram", hist}};
      schemes[var] = sj;
      vr["status"] = "ok";
      vr["distinct_entries"] = clusters.distinct_entries.size();
      vr["levels"] = scheme.categories.size();
      vr["off_scheme_replies"] = labeled.off_scheme_replies;
      vr["unlabeled"] = labeled.unlabeled;
      if (clusters.k_lowered)
        vr["warning"] = "k lowered from " + std::to_string(clusters.k_requested) + " to " +
                        std::to_string(clusters.clustering.k) + " distinct entries";
      all_labeled.insert(all_labeled.end(), labeled.entries.begin(), labeled.entries.end());
    } catch (const normalize::SchemeSynthesisFailed& e) {
      vr["status"] = "failed";
      vr["error"] = e.kind();
      vr["message"] = e.message();
    }
    report[var] = vr;
  }
  write("schemes.json", schemes.dump(2) + "\n", hashes);
  write("normalized_sdoh.csv", normalize::labeled_to_csv(all_labeled), hashes);
  write("normalize_report.json", report.dump(2) + "\n", hashes);
  return {{"variables", config_.normalize_variables.size()}, {"labeled_entries", all_labeled.size()}};
}

json Pipeline::run_evaluate_fidelity(std::map<std::string, std::string>& hashes) {
  const auto records = load_records(out("extractions.jsonl"));
  const auto admissions = load_cohort(out("cohort.jsonl"));
  const auto canonical = vitals::from_csv(read_file(out("canonical_vitals.csv")));

  std::vector<std::string> warnings;
  std::vector<fidelity::TruthVital> truth_v;
  if (fs::exists(config_.truth_vitals)) {
    auto loaded = fidelity::load_truth_vitals(read_file(config_.truth_vitals));
    truth_v = std::move(loaded.rows);
    for (const auto& r : loaded.rejects) warnings.push_back("truth_vitals " + r);
  } else {
    warnings.push_back("truth_vitals not found: vital agreement rows omitted");
  }
  fidelity::TruthSdoh truth_s;
  if (fs::exists(config_.truth_sdoh))
    truth_s = fidelity::load_truth_sdoh(read_file(config_.truth_sdoh));
  else
    warnings.push_back("truth_sdoh not found: categorical agreement rows omitted");

  auto agreement = fidelity::evaluate_agreement(records, canonical, truth_v, truth_s);
  agreement.warnings.insert(agreement.warnings.begin(), warnings.begin(), warnings.end());
  json aj = fidelity::to_json(agreement);
  json coverage = json::object();
  if (!records.empty())
    for (const auto& fi : extract::field_table())
      coverage[std::string(fi.name)] = extract::extraction_coverage(records, fi.name);
  aj["coverage_pct"] = coverage;
  write("agreement_report.json", aj.dump(2) + "\n", hashes);

  fidelity::IcdDescriptions icd;
  json judge_warnings = json::array();
  if (fs::exists(config_.icd9_descriptions))
    icd = fidelity::IcdDescriptions::load(config_.icd9_descriptions);
  else
    judge_warnings.push_back("icd9_descriptions not found: raw codes shown to the judge");
  std::map<HadmId, const cohort::AdmissionRecord*> adm;
  for (const auto& a : admissions) adm[a.hadm_id] = &a;
  std::vector<fidelity::JudgeItem> items;
  for (const auto& r : records) {
    fidelity::JudgeItem it{r.hadm_id, fidelity::diagnosis_strings(r.diagnoses), {}};
    if (auto a = adm.find(r.hadm_id); a != adm.end())
      for (const auto& code : a->second->icd9_codes) it.icd.push_back(icd.describe(code));
    items.push_back(std::move(it));
  }
  const auto& js = config_.agents.at("judge");
  const fidelity::JudgeConfig jc{prompts_.get("judge").text, js.temperature, js.max_tokens};
  const auto outcomes = fidelity::judge_all(gateway(), jc, items);
  std::vector<fidelity::JudgeVerdict> verdicts;
  json vj = json::array(), fj = json::array();
  for (const auto& o : outcomes) {
    if (const auto* v = std::get_if<fidelity::JudgeVerdict>(&o)) {
      verdicts.push_back(*v);
      vj.push_back(fidelity::to_json(*v));
    } else {
      const auto& f = std::get<fidelity::JudgeFailure>(o);
      fj.push_back({{"hadm_id", f.hadm_id}, {"error", "JudgeFailed"}, {"reason", f.reason}});
    }
  }
  json report = {{"verdicts", vj}, {"failures", fj}, {"warnings", judge_warnings}};
  if (!verdicts.empty()) {
    auto summary = fidelity::corpus_judge_summary(verdicts, config_.judge_macro_average);
    summary.n_failed = fj.size();
    report["summary"] = fidelity::to_json(summary);
  } else {
    report["summary"] = nullptr;
  }
  write("judge_report.json", report.dump(2) + "\n", hashes);
  return {{"agreement_rows", agreement.rows.size()}, {"verdicts", verdicts.size()}, {"judge_failures", fj.size()}};
}

json Pipeline::run_associate(std::map<std::string, std::string>& hashes) {
  const auto pairs = cohort::pairs_from_csv(read_file(out("pairs.csv")));
  const auto records = load_records(out("extractions.jsonl"));
  const auto canonical = vitals::from_csv(read_file(out("canonical_vitals.csv")));
  const auto labeled = normalize::labeled_from_csv(read_file(out("normalized_sdoh.csv")));

  std::map<HadmId, int> outcome;
  for (const auto& p : pairs) outcome[p.index_hadm_id] = p.label;
  std::map<HadmId, std::vector<vitals::CanonicalVital>> vit_by;
  for (const auto& c : canonical) vit_by[c.hadm_id].push_back(c);
  std::map<HadmId, const extract::ExtractionRecord*> rec_by;
  for (const auto& r : records) rec_by[r.hadm_id] = &r;

  json fits = json::array(), errors = json::array();
  auto fit = [&](const std::string& name, const std::vector<double>& x, const std::vector<int>& y) {
    try {
      fits.push_back(stats::to_json(stats::fit_univariate_logistic(x, y, config_.standardize, name)));
    } catch (const Error& e) {
      json ej = error_json(name, e);
      ej["n"] = x.size();
      errors.push_back(ej);
    }
  };
  for (vitals::Variable v : vitals::kAllVariables) {
    std::vector<double> x;
    std::vector<int> y;
    for (const auto& [hadm, label] : outcome) {
      auto it = vit_by.find(hadm);
      if (it == vit_by.end()) continue;
      try {
        x.push_back(vitals::aggregate_admission(it->second, v));
        y.push_back(label);
      } catch (const vitals::NoData&) {
      }
    }
    fit(std::string(vitals::to_string(v)), x, y);
  }
  {
    std::vector<double> x;
    std::vector<int> y;
    for (const auto& [hadm, label] : outcome) {
      auto it = rec_by.find(hadm);
      if (it == rec_by.end() || !it->second->get(extract::Field::age)) continue;
      if (auto a = fidelity::parse_age(*it->second->get(extract::Field::age))) {
        x.push_back(*a);
        y.push_back(label);
      }
    }
    fit("age", x, y);
  }

  json chi = json::array();
  auto test = [&](const std::string& name, const std::vector<normalize::LabeledEntry>& entries) {
    try {
      const auto table = stats::build_contingency(entries, outcome);
      json rj = stats::to_json(stats::chi_square_test(table, name));
      rj["contingency"] = stats::to_json(table);
      chi.push_back(rj);
    } catch (const Error& e) {
      errors.push_back(error_json(name, e));
    }
  };
  {
    std::vector<normalize::LabeledEntry> gender;
    for (const auto& r : records)
      if (const auto& g = r.get(extract::Field::gender))
        gender.push_back({r.hadm_id, "gender", *g, fidelity::canonical_category("gender", *g),
                          normalize::LabelStatus::labeled});
    test("gender", gender);
  }
  for (const auto& var : config_.normalize_variables) {
    std::vector<normalize::LabeledEntry> entries;
    for (const auto& e : labeled)
      if (e.variable == var) entries.push_back(e);
    if (entries.empty()) {
      errors.push_back({{"variable", var}, {"error", "NoEntries"}, {"message", "no normalized entries"}});
      continue;
    }
    test(var, entries);
  }
  json report = {{"standardized", config_.standardize}, {"logistic", fits}, {"chi_square", chi}, {"errors", errors}};
  write("association_report.json", report.dump(2) + "\n", hashes);
  return {{"logistic_fits", fits.size()}, {"chi_square_tests", chi.size()}, {"errors", errors.size()}};
}

json Pipeline::run_summarize(std::map<std::string, std::string>& hashes) {
  const auto admissions = load_cohort(out("cohort.jsonl"));
  const auto pairs = cohort::pairs_from_csv(read_file(out("pairs.csv")));
  const auto records = load_records(out("extractions.jsonl"));
  std::map<HadmId, const cohort::AdmissionRecord*> adm;
  for (const auto& a : admissions) adm[a.hadm_id] = &a;
  std::map<HadmId, const extract::ExtractionRecord*> rec_by;
  for (const auto& r : records) rec_by[r.hadm_id] = &r;

  std::vector<extract::NoteInput> notes;
  std::set<HadmId> seen;
  for (const auto& p : pairs) {
    auto it = adm.find(p.index_hadm_id);
    if (it == adm.end() || !it->second->discharge_note || !seen.insert(p.index_hadm_id).second) continue;
    if (summarize::word_count(*it->second->discharge_note) == 0) continue;
    notes.push_back({p.index_hadm_id, *it->second->discharge_note});
  }
  const auto& ss = config_.agents.at("summarizer");
  const summarize::SummarizerConfig sc{prompts_.get("summary_overall").text, prompts_.get("summary_no_number").text,
                                       ss.temperature, ss.max_tokens};
  std::vector<summarize::SummaryRecord> all;
  json failures = json::array();
  for (auto variant : {summarize::Variant::overall, summarize::Variant::no_number}) {
    for (const auto& o : summarize::summarize_all(gateway(), sc, notes, variant)) {
      if (const auto* r = std::get_if<summarize::SummaryRecord>(&o)) {
        all.push_back(*r);
      } else {
        const auto& f = std::get<summarize::SummaryFailure>(o);
        failures.push_back({{"hadm_id", f.hadm_id}, {"variant", summarize::to_string(f.variant)}, {"error", "SummaryFailed"},
                            {"reason", f.reason}});
      }
    }
  }
  size_t structural_missing = 0;
  for (const auto& n : notes) {
    auto it = rec_by.find(n.hadm_id);
    if (it == rec_by.end()) {
      ++structural_missing;
      continue;
    }
    all.push_back(summarize::render_structural(*it->second, n.text));
  }
  write("summaries.jsonl", to_jsonl(all, [](const auto& r) { return summarize::to_json(r); }), hashes);

  json reduction = json::object();
  for (auto v : {summarize::Variant::overall, summarize::Variant::no_number, summarize::Variant::structural}) {
    const auto st = summarize::reduction_stats(all, v);
    reduction[std::string(summarize::to_string(v))] = {{"n", st.n}, {"mean_pct", st.mean_pct}, {"median_pct", st.median_pct}};
  }
  size_t nn = 0, flagged = 0, reprompted = 0, accepted_with_digits = 0;
  for (const auto& r : all) {
    if (r.variant != summarize::Variant::no_number) continue;
    ++nn;
    flagged += r.contains_numbers;
    reprompted += r.reprompted;
    if (!r.contains_numbers && !summarize::passes_digit_check(r.text)) ++accepted_with_digits;
  }
  json report = {{"n_notes", notes.size()},
                 {"reduction", reduction},
                 {"no_number",
                  {{"n", nn},
                   {"n_accepted", nn - flagged},
                   {"n_reprompted", reprompted},
                   {"n_flagged_contains_numbers", flagged},
                   {"accepted_with_digits", accepted_with_digits},
                   {"violation_rate", nn ? static_cast<double>(flagged) / static_cast<double>(nn) : 0.0},
                   {"first_pass_violation_rate", nn ? static_cast<double>(reprompted) / static_cast<double>(nn) : 0.0}}},
                 {"structural_missing", structural_missing},
                 {"failures", failures}};
  write("summary_report.json", report.dump(2) + "\n", hashes);
  return {{"notes", notes.size()}, {"summaries", all.size()}, {"failures", failures.size()}};
}

json Pipeline::run_predict(std::map<std::string, std::string>& hashes) {
  const auto admissions = load_cohort(out("cohort.jsonl"));
  const auto pairs = cohort::pairs_from_csv(read_file(out("pairs.csv")));
  std::map<HadmId, const cohort::AdmissionRecord*> adm;
  for (const auto& a : admissions) adm[a.hadm_id] = &a;
  std::map<std::pair<std::string, HadmId>, summarize::SummaryRecord> sums;
  for (const auto& j : read_jsonl(out("summaries.jsonl"))) {
    auto r = summarize::summary_from_json(j);
    sums[{std::string(summarize::to_string(r.variant)), r.hadm_id}] = r;
  }

  json report = json::object();
  csv::Writer scores({"variant", "hadm_id", "fold", "label", "score"});
  for (const auto& variant : config_.predict_variants) {
    std::vector<predict::LabeledDoc> docs;
    std::set<HadmId> seen;
    for (const auto& p : pairs) {
      if (!seen.insert(p.index_hadm_id).second) continue;
      if (variant == "raw") {
        auto it = adm.find(p.index_hadm_id);
        if (it != adm.end() && it->second->discharge_note) docs.push_back({p.index_hadm_id, *it->second->discharge_note, p.label});
        continue;
      }
      auto it = sums.find({variant, p.index_hadm_id});
      if (it == sums.end() || it->second.contains_numbers) continue;
      docs.push_back({p.index_hadm_id, it->second.text, p.label});
    }
    try {
      const auto rep = predict::evaluate_cv(variant, docs, config_.folds, config_.seed, config_.l2_lambda);
      report[variant] = predict::to_json(rep);
      for (size_t i = 0; i < rep.scores.size(); ++i) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", rep.scores[i].second);
        scores.add({variant, rep.scores[i].first, std::to_string(rep.fold_of[i]), std::to_string(docs[i].label), buf});
      }
    } catch (const Error& e) {
      report[variant] = {{"error", e.kind()}, {"message", e.message()}, {"n_documents", docs.size()}};
    }
  }
  write("prediction_report.json", report.dump(2) + "\n", hashes);
  write("prediction_scores.csv", scores.str(), hashes);
  return {{"variants", config_.predict_variants.size()}};
}

}  // namespace clinnote::pipeline
