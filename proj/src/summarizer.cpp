#include "clinnote/summarizer.hpp"

#include <cctype>

namespace clinnote::summarize {

using nlohmann::json;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::overall: return "overall";
    case Variant::no_number: return "no_number";
    case Variant::structural: return "structural";
  }
  return "";
}

std::optional<Variant> variant_from_string(std::string_view s) {
  for (Variant v : {Variant::overall, Variant::no_number, Variant::structural})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

size_t word_count(std::string_view text) {
  size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

bool passes_digit_check(std::string_view text) { return !contains_digit(text); }

double reduction_pct(size_t raw_words, size_t summary_words) {
  if (raw_words == 0) throw InvalidInput("raw text has no words");
  return 100.0 * (1.0 - static_cast<double>(summary_words) / static_cast<double>(raw_words));
}

std::string numeral_repair_content(const std::string& note, const std::string& previous) {
  return "Rewrite the summary below and " + std::string(kNumeralInstruction) +
         "; express every quantity with qualitative words.\n\nSummary:\n" + previous + "\n\nDischarge summary:\n" +
         note;
}

namespace {

SummaryRecord make_record(const extract::NoteInput& note, Variant variant, std::string text) {
  SummaryRecord r;
  r.hadm_id = note.hadm_id;
  r.variant = variant;
  r.text = std::move(text);
  r.word_count_raw = word_count(note.text);
  r.word_count_summary = word_count(r.text);
  r.reduction_pct = reduction_pct(r.word_count_raw, r.word_count_summary);
  return r;
}

llm::ChatRequest request_for(const SummarizerConfig& config, Variant variant, std::string user) {
  llm::ChatRequest r;
  r.system_prompt = variant == Variant::overall ? config.overall_prompt : config.no_number_prompt;
  r.user_content = std::move(user);
  r.temperature = config.temperature;
  r.max_tokens = config.max_tokens;
  r.task = variant == Variant::overall ? "summary_overall" : "summary_no_number";
  return r;
}

}  // namespace

std::vector<SummaryOutcome> summarize_all(llm::Gateway& gateway, const SummarizerConfig& config,
                                          const std::vector<extract::NoteInput>& notes, Variant variant) {
  if (variant == Variant::structural) throw InvalidInput("structural summaries come from render_structural");
  std::vector<llm::ChatRequest> reqs;
  for (const auto& n : notes) {
    if (word_count(n.text) == 0) throw InvalidInput("empty note for " + n.hadm_id);
    reqs.push_back(request_for(config, variant, n.text));
  }
  const auto first = gateway.chat_batch(reqs);

  std::vector<std::optional<SummaryOutcome>> out(notes.size());
  std::vector<size_t> retry;
  std::vector<llm::ChatRequest> repairs;
  for (size_t i = 0; i < notes.size(); ++i) {
    if (!first[i].ok()) {
      out[i] = SummaryFailure{notes[i].hadm_id, variant, first[i].error_kind + ": " + first[i].error_message};
      continue;
    }
    const std::string& text = first[i].response->raw_text;
    if (variant == Variant::no_number && !passes_digit_check(text)) {
      retry.push_back(i);
      repairs.push_back(request_for(config, variant, numeral_repair_content(notes[i].text, text)));
      continue;
    }
    out[i] = make_record(notes[i], variant, trim(text));
  }
  if (!retry.empty()) {
    const auto second = gateway.chat_batch(repairs);
    for (size_t k = 0; k < retry.size(); ++k) {
      const size_t i = retry[k];
      if (!second[k].ok()) {
        out[i] = SummaryFailure{notes[i].hadm_id, variant, second[k].error_kind + ": " + second[k].error_message};
        continue;
      }
      auto rec = make_record(notes[i], variant, trim(second[k].response->raw_text));
      rec.reprompted = true;
      rec.contains_numbers = !passes_digit_check(rec.text);
      out[i] = std::move(rec);
    }
  }
  std::vector<SummaryOutcome> result;
  result.reserve(out.size());
  for (auto& o : out) result.push_back(std::move(*o));
  return result;
}

SummaryRecord summarize(llm::Gateway& gateway, const SummarizerConfig& config, const extract::NoteInput& note,
                        Variant variant) {
  auto outcome = summarize_all(gateway, config, {note}, variant).front();
  if (auto* f = std::get_if<SummaryFailure>(&outcome)) throw SummaryFailed(note.hadm_id + ": " + f->reason);
  return std::get<SummaryRecord>(outcome);
}

std::string structural_text(const extract::ExtractionRecord& record) {
  std::string out;
  auto line = [&](std::string_view key, const std::string& value) {
    if (!out.empty()) out += '\n';
    out += key;
    out += ": ";
    out += value;
  };
  for (const auto& fi : extract::field_table())
    if (const auto& v = record.get(fi.field)) line(fi.name, *v);
  if (!record.diagnoses.empty()) {
    std::string dx;
    for (const auto& d : record.diagnoses) {
      if (!dx.empty()) dx += "; ";
      dx += d.details.empty() ? d.condition : d.condition + " (" + d.details + ")";
    }
    line("diagnoses", dx);
  }
  return out;
}

SummaryRecord render_structural(const extract::ExtractionRecord& record, std::string_view note_text) {
  return make_record({record.hadm_id, std::string(note_text)}, Variant::structural, structural_text(record));
}

ReductionStats reduction_stats(const std::vector<SummaryRecord>& records, Variant variant) {
  std::vector<double> xs;
  for (const auto& r : records)
    if (r.variant == variant) xs.push_back(r.reduction_pct);
  ReductionStats s;
  s.n = xs.size();
  if (!xs.empty()) {
    s.mean_pct = mean(xs);
    s.median_pct = median(xs);
  }
  return s;
}

json to_json(const SummaryRecord& r) {
  return {{"hadm_id", r.hadm_id},
          {"variant", to_string(r.variant)},
          {"text", r.text},
          {"word_count_raw", r.word_count_raw},
          {"word_count_summary", r.word_count_summary},
          {"reduction_pct", r.reduction_pct},
          {"contains_numbers", r.contains_numbers},
          {"reprompted", r.reprompted}};
}

SummaryRecord summary_from_json(const json& j) {
  SummaryRecord r;
  r.hadm_id = j.at("hadm_id").get<std::string>();
  auto v = variant_from_string(j.at("variant").get<std::string>());
  if (!v) throw InvalidInput("unknown summary variant");
  r.variant = *v;
  r.text = j.at("text").get<std::string>();
  r.word_count_raw = j.at("word_count_raw").get<size_t>();
  r.word_count_summary = j.at("word_count_summary").get<size_t>();
  r.reduction_pct = j.at("reduction_pct").get<double>();
  r.contains_numbers = j.value("contains_numbers", false);
  r.reprompted = j.value("reprompted", false);
  return r;
}

}  // namespace clinnote::summarize
