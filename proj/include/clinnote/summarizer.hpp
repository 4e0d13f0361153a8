#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/extractor.hpp"
#include "clinnote/gateway.hpp"

namespace clinnote::summarize {

class SummaryFailed : public Error {
 public:
  explicit SummaryFailed(const std::string& what) : Error("SummaryFailed", what) {}
};

enum class Variant { overall, no_number, structural };
std::string_view to_string(Variant v);
std::optional<Variant> variant_from_string(std::string_view s);

struct SummaryRecord {
  HadmId hadm_id;
  Variant variant = Variant::overall;
  std::string text;
  size_t word_count_raw = 0;
  size_t word_count_summary = 0;
  double reduction_pct = 0.0;
  bool contains_numbers = false;  // no_number output that still has digits after the re-prompt
  bool reprompted = false;
};

struct SummaryFailure {
  HadmId hadm_id;
  Variant variant = Variant::overall;
  std::string reason;
};

using SummaryOutcome = std::variant<SummaryRecord, SummaryFailure>;

// Maximal runs of non-whitespace.
size_t word_count(std::string_view text);
// True when the text has no character in [0-9].
bool passes_digit_check(std::string_view text);
// 100 * (1 - summary / raw); raw must be positive.
double reduction_pct(size_t raw_words, size_t summary_words);

inline constexpr std::string_view kNumeralInstruction = "remove every numeral";

struct SummarizerConfig {
  std::string overall_prompt;
  std::string no_number_prompt;
  double temperature = 0.3;
  int max_tokens = 4096;
};

std::string numeral_repair_content(const std::string& note, const std::string& previous);

std::vector<SummaryOutcome> summarize_all(llm::Gateway& gateway, const SummarizerConfig& config,
                                          const std::vector<extract::NoteInput>& notes, Variant variant);
// Throws SummaryFailed when the gateway call fails.
SummaryRecord summarize(llm::Gateway& gateway, const SummarizerConfig& config, const extract::NoteInput& note,
                        Variant variant);

// "key: value" per non-null field in schema order, then one diagnoses line.
std::string structural_text(const extract::ExtractionRecord& record);
SummaryRecord render_structural(const extract::ExtractionRecord& record, std::string_view note_text);

struct ReductionStats {
  size_t n = 0;
  double mean_pct = 0.0;
  double median_pct = 0.0;
};
ReductionStats reduction_stats(const std::vector<SummaryRecord>& records, Variant variant);

nlohmann::json to_json(const SummaryRecord& r);
SummaryRecord summary_from_json(const nlohmann::json& j);

}  // namespace clinnote::summarize
