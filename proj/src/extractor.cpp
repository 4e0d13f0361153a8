#include "clinnote/extractor.hpp"

#include <algorithm>
#include <initializer_list>

#include "clinnote/json_scan.hpp"

namespace clinnote::extract {

namespace {

using nlohmann::json;

const std::array<FieldInfo, kFieldCount> kFields = {{
    {Field::gender, Section::charted_sdoh, "Gender", "gender"},
    {Field::age, Section::charted_sdoh, "Age", "age"},
    {Field::language, Section::charted_sdoh, "Language", "language"},
    {Field::marital_status, Section::charted_sdoh, "Marital_Status", "marital_status"},
    {Field::alcohol_use, Section::uncharted_sdoh, "Alcohol_use", "alcohol_use"},
    {Field::tobacco_use, Section::uncharted_sdoh, "Tobacco_use", "tobacco_use"},
    {Field::drug_use, Section::uncharted_sdoh, "Drug_use", "drug_use"},
    {Field::transportation, Section::uncharted_sdoh, "Transportation", "transportation"},
    {Field::housing, Section::uncharted_sdoh, "Housing", "housing"},
    {Field::parental, Section::uncharted_sdoh, "Parental", "parental"},
    {Field::employment_status, Section::uncharted_sdoh, "Employment_Status", "employment_status"},
    {Field::social_support, Section::uncharted_sdoh, "Social_Support", "social_support"},
    {Field::body_temperature, Section::vitals_raw, "Body_Temperature", "body_temperature"},
    {Field::heart_rate, Section::vitals_raw, "Heart_Rate", "heart_rate"},
    {Field::respiration_rate, Section::vitals_raw, "Respiration_Rate", "respiration_rate"},
    {Field::blood_pressure, Section::vitals_raw, "Blood_Pressure", "blood_pressure"},
    {Field::spo2, Section::vitals_raw, "SpO2", "spo2"},
    {Field::height, Section::vitals_raw, "Height", "height"},
    {Field::weight, Section::vitals_raw, "Weight", "weight"},
    {Field::symptoms, Section::chief_complaint, "Symptoms", "symptoms"},
    {Field::description, Section::chief_complaint, "Description", "description"},
}};

// Extra folded spellings models drift into.
std::vector<std::string> aliases(Field f) {
  switch (f) {
    case Field::gender: return {"sex"};
    case Field::language: return {"primarylanguage"};
    case Field::alcohol_use: return {"alcohol"};
    case Field::tobacco_use: return {"tobacco", "smoking"};
    case Field::drug_use: return {"drugs", "substanceuse"};
    case Field::parental: return {"parentalstatus"};
    case Field::employment_status: return {"employment"};
    case Field::body_temperature: return {"temperature", "temp"};
    case Field::heart_rate: return {"hr", "pulse"};
    case Field::respiration_rate: return {"respiratoryrate", "rr"};
    case Field::blood_pressure: return {"bp"};
    case Field::spo2: return {"o2sat", "oxygensaturation"};
    default: return {};
  }
}

const json* find_key(const json& obj, std::initializer_list<std::string_view> folded_names) {
  if (!obj.is_object()) return nullptr;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string k = key_fold(it.key());
    for (auto name : folded_names)
      if (k == name) return &it.value();
  }
  return nullptr;
}

const json* find_key(const json& obj, const std::vector<std::string>& folded_names) {
  if (!obj.is_object()) return nullptr;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string k = key_fold(it.key());
    if (std::find(folded_names.begin(), folded_names.end(), k) != folded_names.end()) return &it.value();
  }
  return nullptr;
}

const json* section_object(const json* node, const std::string& where) {
  if (!node || node->is_null()) return nullptr;
  if (!node->is_object()) throw SchemaViolation(where + " must be an object");
  return node;
}

}  // namespace

const std::array<FieldInfo, kFieldCount>& field_table() { return kFields; }

const FieldInfo& info(Field f) { return kFields[static_cast<size_t>(f)]; }

std::optional<Field> field_by_name(std::string_view name) {
  const std::string folded = key_fold(name);
  for (const auto& fi : kFields)
    if (key_fold(fi.name) == folded || key_fold(fi.schema_key) == folded) return fi.field;
  return std::nullopt;
}

std::string_view section_name(Section s) {
  switch (s) {
    case Section::charted_sdoh: return "charted_sdoh";
    case Section::uncharted_sdoh: return "uncharted_sdoh";
    case Section::vitals_raw: return "vitals_raw";
    case Section::chief_complaint: return "chief_complaint";
  }
  return "";
}

std::optional<std::string> canonical_value(const json& value) {
  if (value.is_null()) return std::nullopt;
  std::string s;
  if (value.is_string()) {
    s = value.get<std::string>();
  } else if (value.is_number()) {
    s = value.dump();
  } else if (value.is_boolean()) {
    s = value.get<bool>() ? "Yes" : "No";
  } else if (value.is_array()) {
    std::vector<std::string> parts;
    for (const auto& item : value) {
      if (item.is_object() || item.is_array()) throw SchemaViolation("nested value inside list field");
      if (auto v = canonical_value(item)) parts.push_back(*v);
    }
    for (size_t i = 0; i < parts.size(); ++i) s += (i ? "; " : "") + parts[i];
  } else {
    throw SchemaViolation("field value must be a string, number or list of strings");
  }
  s = trim(s);
  if (s.empty() || iequals(s, "null")) return std::nullopt;
  return s;
}

ExtractionRecord record_from_schema_json(const json& root) {
  if (!root.is_object()) throw SchemaViolation("top level must be an object");
  ExtractionRecord rec;

  const json* charted = section_object(find_key(root, {"chartedsdohs", "chartedsdoh"}), "Charted_SDOHs");
  const json* uncharted = section_object(
      find_key(root, {"nonchartedsdohs", "nonchartedsdoh", "unchartedsdohs", "unchartedsdoh"}),
      "NonCharted_SDOHs");
  const json* clinical = section_object(find_key(root, {"clinicalinfo"}), "Clinical_Info");
  const json* vitals_node = clinical ? find_key(*clinical, {"vitals"}) : nullptr;
  if (!vitals_node) vitals_node = find_key(root, {"vitals"});
  const json* vitals = section_object(vitals_node, "Vitals");
  const json* cc_node = find_key(root, {"chiefcomplaint"});
  if (!cc_node && clinical) cc_node = find_key(*clinical, {"chiefcomplaint"});

  const json* chief = nullptr;
  if (cc_node && cc_node->is_string()) {
    rec.get(Field::description) = canonical_value(*cc_node);
  } else {
    chief = section_object(cc_node, "Chief_Complaint");
  }

  for (const auto& fi : kFields) {
    const json* section = nullptr;
    switch (fi.section) {
      case Section::charted_sdoh: section = charted; break;
      case Section::uncharted_sdoh: section = uncharted; break;
      case Section::vitals_raw: section = vitals; break;
      case Section::chief_complaint: section = chief; break;
    }
    if (!section) continue;
    auto names = aliases(fi.field);
    names.push_back(key_fold(fi.schema_key));
    if (const json* v = find_key(*section, names)) {
      try {
        rec.get(fi.field) = canonical_value(*v);
      } catch (const SchemaViolation& e) {
        throw SchemaViolation(std::string(fi.schema_key) + ": " + e.message());
      }
    }
  }

  const json* dx = find_key(root, {"diagnoses"});
  if (!dx && clinical) dx = find_key(*clinical, {"diagnoses"});
  if (dx && !dx->is_null()) {
    if (!dx->is_array()) throw SchemaViolation("Diagnoses must be a list");
    for (const auto& item : *dx) {
      Diagnosis d;
      if (item.is_string()) {
        d.condition = trim(item.get<std::string>());
      } else if (item.is_object()) {
        const json* cond = find_key(item, {"condition", "diagnosis"});
        if (!cond || !cond->is_string()) throw SchemaViolation("diagnosis entry without a Condition string");
        d.condition = trim(cond->get<std::string>());
        if (const json* det = find_key(item, {"details"}); det && !det->is_null()) {
          auto v = canonical_value(*det);
          d.details = v.value_or("");
        }
      } else {
        throw SchemaViolation("diagnosis entries must be objects");
      }
      if (!d.condition.empty() && !iequals(d.condition, "null")) rec.diagnoses.push_back(std::move(d));
    }
  }
  return rec;
}

ExtractionRecord parse_structured_output(std::string_view raw_text) {
  auto j = clinnote::find_json_object(raw_text);
  if (!j) throw ParseFailure("no JSON object found in model output");
  return record_from_schema_json(*j);
}

namespace {

std::string repair_prompt(const std::string& note, const std::string& previous, const std::string& reason) {
  return note + "\n\n---\nYour previous reply could not be used (" + reason + "). Previous reply:\n" + previous +
         "\n---\n" + std::string(kRepairInstruction);
}

llm::ChatRequest base_request(const ExtractorConfig& config, std::string user) {
  llm::ChatRequest r;
  r.system_prompt = config.system_prompt;
  r.user_content = std::move(user);
  r.temperature = config.temperature;
  r.max_tokens = config.max_tokens;
  r.task = "extract";
  return r;
}

struct Attempt {
  std::optional<ExtractionRecord> record;
  std::string error_kind, error_message, raw;
};

Attempt interpret(const llm::ChatOutcome& outcome) {
  Attempt a;
  if (!outcome.ok()) {
    a.error_kind = outcome.error_kind;
    a.error_message = outcome.error_message;
    return a;
  }
  a.raw = outcome.response->raw_text;
  try {
    a.record = parse_structured_output(a.raw);
  } catch (const Error& e) {
    a.error_kind = e.kind();
    a.error_message = e.message();
  }
  return a;
}

bool is_model_output_error(const Attempt& a) {
  return a.error_kind == "ParseFailure" || a.error_kind == "SchemaViolation";
}

}  // namespace

std::vector<ExtractionOutcome> extract_all(llm::Gateway& gateway, const ExtractorConfig& config,
                                           const std::vector<NoteInput>& notes) {
  std::vector<llm::ChatRequest> first;
  for (const auto& n : notes) {
    if (trim(n.text).empty()) throw InvalidInput("empty note for " + n.hadm_id);
    first.push_back(base_request(config, n.text));
  }
  auto outcomes = gateway.chat_batch(first);
  std::vector<Attempt> attempts;
  std::vector<size_t> retry_idx;
  std::vector<llm::ChatRequest> retries;
  for (size_t i = 0; i < notes.size(); ++i) {
    attempts.push_back(interpret(outcomes[i]));
    if (!attempts.back().record && is_model_output_error(attempts.back())) {
      retry_idx.push_back(i);
      retries.push_back(base_request(config, repair_prompt(notes[i].text, attempts.back().raw,
                                                           attempts.back().error_message)));
    }
  }
  auto repaired = gateway.chat_batch(retries);

  std::vector<ExtractionOutcome> result(notes.size());
  std::vector<std::vector<std::string>> raws(notes.size());
  for (size_t i = 0; i < notes.size(); ++i)
    if (!attempts[i].raw.empty()) raws[i].push_back(attempts[i].raw);
  for (size_t r = 0; r < retry_idx.size(); ++r) {
    auto a = interpret(repaired[r]);
    if (!a.raw.empty()) raws[retry_idx[r]].push_back(a.raw);
    attempts[retry_idx[r]] = std::move(a);
  }
  for (size_t i = 0; i < notes.size(); ++i) {
    if (attempts[i].record) {
      attempts[i].record->hadm_id = notes[i].hadm_id;
      result[i] = std::move(*attempts[i].record);
    } else {
      result[i] = QuarantinedExtraction{notes[i].hadm_id, attempts[i].error_kind, attempts[i].error_message,
                                        std::move(raws[i])};
    }
  }
  return result;
}

ExtractionOutcome extract(llm::Gateway& gateway, const ExtractorConfig& config, const NoteInput& note) {
  return std::move(extract_all(gateway, config, {note}).front());
}

double extraction_coverage(const std::vector<ExtractionRecord>& records, std::string_view variable) {
  const bool diagnoses = key_fold(variable) == "diagnoses";
  const auto field = field_by_name(variable);
  if (!diagnoses && !field) throw InvalidVariable(std::string(variable));
  if (records.empty()) throw InvalidInput("coverage needs at least one record");
  size_t hits = 0;
  for (const auto& r : records) hits += diagnoses ? !r.diagnoses.empty() : r.get(*field).has_value();
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

json to_json(const ExtractionRecord& r) {
  json j;
  j["hadm_id"] = r.hadm_id;
  for (Section s : {Section::charted_sdoh, Section::uncharted_sdoh, Section::vitals_raw, Section::chief_complaint})
    j[std::string(section_name(s))] = json::object();
  for (const auto& fi : kFields) {
    const auto& v = r.get(fi.field);
    j[std::string(section_name(fi.section))][std::string(fi.name)] = v ? json(*v) : json(nullptr);
  }
  j["diagnoses"] = json::array();
  for (const auto& d : r.diagnoses) j["diagnoses"].push_back({{"condition", d.condition}, {"details", d.details}});
  return j;
}

ExtractionRecord record_from_json(const json& j) {
  ExtractionRecord r;
  r.hadm_id = j.at("hadm_id").get<std::string>();
  for (const auto& fi : kFields) {
    const auto& v = j.at(std::string(section_name(fi.section))).at(std::string(fi.name));
    if (!v.is_null()) r.get(fi.field) = v.get<std::string>();
  }
  for (const auto& d : j.at("diagnoses"))
    r.diagnoses.push_back({d.at("condition").get<std::string>(), d.value("details", "")});
  return r;
}

json to_json(const QuarantinedExtraction& q) {
  return {{"hadm_id", q.hadm_id},
          {"error_kind", q.error_kind},
          {"error_message", q.error_message},
          {"raw_responses", q.raw_responses}};
}

}  // namespace clinnote::extract
