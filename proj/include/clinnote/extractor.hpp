#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/gateway.hpp"

namespace clinnote::extract {

class ParseFailure : public Error {
 public:
  explicit ParseFailure(const std::string& what) : Error("ParseFailure", what) {}
};
class SchemaViolation : public Error {
 public:
  explicit SchemaViolation(const std::string& what) : Error("SchemaViolation", what) {}
};
class InvalidVariable : public Error {
 public:
  explicit InvalidVariable(const std::string& what) : Error("InvalidVariable", what) {}
};

enum class Section { charted_sdoh, uncharted_sdoh, vitals_raw, chief_complaint };

enum class Field {
  gender,
  age,
  language,
  marital_status,
  alcohol_use,
  tobacco_use,
  drug_use,
  transportation,
  housing,
  parental,
  employment_status,
  social_support,
  body_temperature,
  heart_rate,
  respiration_rate,
  blood_pressure,
  spo2,
  height,
  weight,
  symptoms,
  description,
};
inline constexpr size_t kFieldCount = 21;

struct FieldInfo {
  Field field;
  Section section;
  std::string_view schema_key;  // key in the model's JSON, e.g. "Marital_Status"
  std::string_view name;        // snake_case name used in outputs
};

// Every scalar field in output order.
const std::array<FieldInfo, kFieldCount>& field_table();
const FieldInfo& info(Field f);
std::optional<Field> field_by_name(std::string_view name);
std::string_view section_name(Section s);

struct Diagnosis {
  std::string condition;
  std::string details;
  bool operator==(const Diagnosis&) const = default;
};

struct ExtractionRecord {
  HadmId hadm_id;
  std::array<std::optional<std::string>, kFieldCount> fields;
  std::vector<Diagnosis> diagnoses;

  const std::optional<std::string>& get(Field f) const { return fields[static_cast<size_t>(f)]; }
  std::optional<std::string>& get(Field f) { return fields[static_cast<size_t>(f)]; }
  bool operator==(const ExtractionRecord&) const = default;
};

struct QuarantinedExtraction {
  HadmId hadm_id;
  std::string error_kind;
  std::string error_message;
  std::vector<std::string> raw_responses;
};

using ExtractionOutcome = std::variant<ExtractionRecord, QuarantinedExtraction>;

// Throws ParseFailure when no JSON object is present and SchemaViolation
// when the object has the wrong shape.
ExtractionRecord parse_structured_output(std::string_view raw_text);
ExtractionRecord record_from_schema_json(const nlohmann::json& root);

// "null" (any case), JSON null and blank strings all become std::nullopt.
std::optional<std::string> canonical_value(const nlohmann::json& value);

struct ExtractorConfig {
  std::string system_prompt;
  double temperature = 0.0;
  int max_tokens = 4096;
};

inline constexpr std::string_view kRepairInstruction = "Return only valid JSON matching the schema.";

struct NoteInput {
  HadmId hadm_id;
  std::string text;
};

// At most one repair re-prompt per note; a second failure quarantines.
ExtractionOutcome extract(llm::Gateway& gateway, const ExtractorConfig& config, const NoteInput& note);
std::vector<ExtractionOutcome> extract_all(llm::Gateway& gateway, const ExtractorConfig& config,
                                           const std::vector<NoteInput>& notes);

// Percentage (0-100) of records with a non-null value for `variable`
// (a field name, a schema key, or "diagnoses").
double extraction_coverage(const std::vector<ExtractionRecord>& records, std::string_view variable);

nlohmann::json to_json(const ExtractionRecord& r);
ExtractionRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuarantinedExtraction& q);

}  // namespace clinnote::extract
