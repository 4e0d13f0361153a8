#include "clinnote/normalizer.hpp"

#include <algorithm>
#include <set>

#include "clinnote/csv.hpp"
#include "clinnote/json_scan.hpp"

namespace clinnote::normalize {

using nlohmann::json;

namespace {

bool is_fallback_label(const std::string& label) {
  return to_lower(label).find(to_lower(kFallbackLabel)) != std::string::npos;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '`')) s.erase(s.begin());
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '`' || s.back() == '.')) s.pop_back();
  return trim(s);
}

}  // namespace

bool CategoryScheme::has(const std::string& label) const {
  return std::any_of(categories.begin(), categories.end(), [&](const auto& c) { return c.label == label; });
}

const std::string& CategoryScheme::fallback() const {
  for (const auto& c : categories)
    if (is_fallback_label(c.label)) return c.label;
  throw SchemeInvalid("scheme for " + variable + " has no fallback category");
}

void validate_scheme(const CategoryScheme& scheme) {
  const size_t n = scheme.categories.size();
  if (n < kMinCategories || n > kMaxCategories)
    throw SchemeInvalid(std::to_string(n) + " categories; allowed range is " + std::to_string(kMinCategories) + "-" +
                        std::to_string(kMaxCategories));
  std::set<std::string> seen;
  size_t fallbacks = 0;
  for (const auto& c : scheme.categories) {
    if (trim(c.label).empty()) throw SchemeInvalid("empty category label");
    if (!seen.insert(to_lower(c.label)).second) throw SchemeInvalid("duplicate label '" + c.label + "'");
    fallbacks += is_fallback_label(c.label);
  }
  if (fallbacks != 1)
    throw SchemeInvalid("expected exactly one '" + std::string(kFallbackLabel) + "' category, found " +
                        std::to_string(fallbacks));
}

std::vector<std::string> ClusterResult::medoid_texts() const {
  std::vector<std::string> out;
  for (size_t m : clustering.medoid_indices) out.push_back(distinct_entries[m]);
  return out;
}

ClusterResult cluster_entries(llm::Gateway& gateway, const std::vector<std::string>& entries, int k,
                              std::uint64_t seed) {
  if (k <= 0) throw cluster::InvalidK("k must be positive, got " + std::to_string(k));
  if (entries.empty()) throw InvalidInput("cluster_entries needs at least one entry");
  ClusterResult out;
  out.k_requested = k;
  std::map<std::string, size_t> position;
  for (const auto& e : entries) {
    auto [it, inserted] = position.emplace(e, out.distinct_entries.size());
    if (inserted) {
      out.distinct_entries.push_back(e);
      out.weights.push_back(1.0);
    } else {
      out.weights[it->second] += 1.0;
    }
  }
  out.k_lowered = static_cast<size_t>(k) > out.distinct_entries.size();
  const auto embeddings = gateway.embed(out.distinct_entries);
  std::vector<std::vector<double>> vectors;
  vectors.reserve(embeddings.size());
  for (const auto& e : embeddings) vectors.push_back(e.values);
  out.clustering = cluster::pam_cosine(vectors, out.weights, k, {.seed = seed});

  std::vector<size_t> sizes(out.clustering.medoid_indices.size(), 0);
  for (size_t i = 0; i < out.clustering.assignments.size(); ++i)
    sizes[static_cast<size_t>(out.clustering.assignments[i])] += static_cast<size_t>(out.weights[i]);
  for (size_t s : sizes) ++out.size_histogram[s];
  return out;
}

std::string scheme_request_content(const std::string& variable, const std::vector<std::string>& medoid_texts) {
  return "Variable: " + variable + "\nRepresentative entries (JSON list):\n" + json(medoid_texts).dump(2);
}

CategoryScheme parse_scheme_reply(const std::string& variable, const std::string& reply,
                                  const std::vector<std::string>& medoid_texts) {
  auto j = find_json_value(reply);
  if (!j) throw SchemeInvalid("no JSON in reply");
  json list;
  if (j->is_array()) {
    list = *j;
  } else if (j->contains("categories") && (*j)["categories"].is_array()) {
    list = (*j)["categories"];
  } else {
    throw SchemeInvalid("reply lacks a 'categories' list");
  }
  const std::set<std::string> medoids(medoid_texts.begin(), medoid_texts.end());
  CategoryScheme s;
  s.variable = variable;
  for (const auto& item : list) {
    Category c;
    if (item.is_string()) {
      c.label = trim(item.get<std::string>());
    } else if (item.is_object()) {
      c.label = trim(item.value("label", ""));
      c.description = trim(item.value("description", ""));
      if (item.contains("examples") && item["examples"].is_array()) {
        for (const auto& ex : item["examples"])
          if (ex.is_string() && medoids.count(ex.get<std::string>()))
            s.medoid_examples[c.label].push_back(ex.get<std::string>());
      }
    } else {
      throw SchemeInvalid("category entries must be objects or strings");
    }
    s.categories.push_back(std::move(c));
  }
  if (std::none_of(s.categories.begin(), s.categories.end(), [](const auto& c) { return is_fallback_label(c.label); }))
    s.categories.push_back({std::string(kFallbackLabel), "Entry is uninformative or fits no other category."});
  validate_scheme(s);
  return s;
}

CategoryScheme synthesize_scheme(llm::Gateway& gateway, const AgentConfig& config, const std::string& variable,
                                 const std::vector<std::string>& medoid_texts) {
  if (medoid_texts.empty()) throw InvalidInput("synthesize_scheme needs medoid texts");
  llm::ChatRequest req;
  req.system_prompt = config.system_prompt;
  req.user_content = scheme_request_content(variable, medoid_texts);
  req.temperature = config.temperature;
  req.max_tokens = config.max_tokens;
  req.task = "scheme";

  std::string problem;
  std::string previous;
  for (int attempt = 0; attempt < 2; ++attempt) {
    llm::ChatRequest r = req;
    if (attempt == 1)
      r.user_content += "\n\n---\nYour previous reply could not be used (" + problem + "). Previous reply:\n" +
                        previous + "\n---\nReturn only valid JSON with between 2 and 12 categories.";
    try {
      auto resp = gateway.chat(r);
      previous = resp.raw_text;
      auto scheme = parse_scheme_reply(variable, resp.raw_text, medoid_texts);
      scheme.model = r.model_name.empty() ? gateway.config().chat_model : r.model_name;
      return scheme;
    } catch (const SchemeInvalid& e) {
      problem = e.message();
    } catch (const Error& e) {
      throw SchemeSynthesisFailed(variable + ": " + e.what());
    }
  }
  throw SchemeSynthesisFailed(variable + ": " + problem);
}

std::string label_request_content(const CategoryScheme& scheme, const std::string& entry) {
  json cats = json::array();
  for (const auto& c : scheme.categories) {
    json item = {{"label", c.label}, {"description", c.description}};
    auto it = scheme.medoid_examples.find(c.label);
    item["examples"] = it == scheme.medoid_examples.end() ? json::array() : json(it->second);
    cats.push_back(std::move(item));
  }
  return "Variable: " + scheme.variable + "\nCategories (JSON):\n" + cats.dump(2) + "\nEntry (JSON string): " +
         json(entry).dump();
}

std::optional<std::string> match_label(const CategoryScheme& scheme, const std::string& reply) {
  std::string candidate = reply;
  if (auto j = find_json_object(reply)) {
    for (const char* key : {"category", "label"})
      if (j->contains(key) && (*j)[key].is_string()) {
        candidate = (*j)[key].get<std::string>();
        break;
      }
  }
  candidate = strip_quotes(candidate);
  for (const auto& c : scheme.categories)
    if (iequals(c.label, candidate)) return c.label;
  const std::string folded = key_fold(candidate);
  for (const auto& c : scheme.categories)
    if (!folded.empty() && key_fold(c.label) == folded) return c.label;
  return std::nullopt;
}

LabelingResult label_entries(llm::Gateway& gateway, const AgentConfig& config, const CategoryScheme& scheme,
                             const std::vector<EntryInput>& entries) {
  validate_scheme(scheme);
  std::vector<std::string> distinct;
  std::map<std::string, size_t> position;
  for (const auto& e : entries)
    if (position.emplace(e.raw_text, distinct.size()).second) distinct.push_back(e.raw_text);

  std::vector<llm::ChatRequest> requests;
  for (const auto& text : distinct) {
    llm::ChatRequest r;
    r.system_prompt = config.system_prompt;
    r.user_content = label_request_content(scheme, text);
    r.temperature = config.temperature;
    r.max_tokens = config.max_tokens;
    r.task = "label";
    requests.push_back(std::move(r));
  }
  const auto outcomes = gateway.chat_batch(requests);

  LabelingResult result;
  std::vector<std::optional<std::string>> label_of(distinct.size());
  for (size_t i = 0; i < distinct.size(); ++i) {
    if (!outcomes[i].ok()) continue;
    auto label = match_label(scheme, outcomes[i].response->raw_text);
    if (!label) {
      label = scheme.fallback();
      ++result.off_scheme_replies;
    }
    label_of[i] = label;
  }
  for (const auto& e : entries) {
    const auto& label = label_of[position.at(e.raw_text)];
    LabeledEntry le{e.hadm_id, scheme.variable, e.raw_text, label.value_or(""),
                    label ? LabelStatus::labeled : LabelStatus::unlabeled};
    if (!label) ++result.unlabeled;
    result.entries.push_back(std::move(le));
  }
  return result;
}

json to_json(const CategoryScheme& s) {
  json cats = json::array();
  for (const auto& c : s.categories) cats.push_back({{"label", c.label}, {"description", c.description}});
  return {{"variable", s.variable},
          {"categories", cats},
          {"medoid_examples", s.medoid_examples},
          {"provenance",
           {{"model", s.model},
            {"normalizer_prompt_sha256", s.normalizer_prompt_sha256},
            {"labeler_prompt_sha256", s.labeler_prompt_sha256}}}};
}

CategoryScheme scheme_from_json(const json& j) {
  CategoryScheme s;
  s.variable = j.at("variable").get<std::string>();
  for (const auto& c : j.at("categories"))
    s.categories.push_back({c.at("label").get<std::string>(), c.value("description", "")});
  if (j.contains("medoid_examples"))
    s.medoid_examples = j["medoid_examples"].get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    s.model = p.value("model", "");
    s.normalizer_prompt_sha256 = p.value("normalizer_prompt_sha256", "");
    s.labeler_prompt_sha256 = p.value("labeler_prompt_sha256", "");
  }
  return s;
}

std::string_view to_string(LabelStatus s) { return s == LabelStatus::labeled ? "labeled" : "unlabeled"; }

std::string labeled_to_csv(const std::vector<LabeledEntry>& rows) {
  csv::Writer w({"hadm_id", "variable", "raw_text", "category", "status"});
  for (const auto& r : rows)
    w.add({r.hadm_id, r.variable, r.raw_text, r.assigned_category, std::string(to_string(r.status))});
  return w.str();
}

std::vector<LabeledEntry> labeled_from_csv(std::string_view text) {
  auto t = csv::Table::parse(text);
  if (!t.rejects().empty()) throw InvalidInput("malformed normalized_sdoh.csv");
  const auto ch = t.require_column("hadm_id", "normalized_sdoh.csv");
  const auto cv = t.require_column("variable", "normalized_sdoh.csv");
  const auto cr = t.require_column("raw_text", "normalized_sdoh.csv");
  const auto cc = t.require_column("category", "normalized_sdoh.csv");
  const auto cs = t.require_column("status", "normalized_sdoh.csv");
  std::vector<LabeledEntry> out;
  for (const auto& r : t.rows())
    out.push_back({r.fields[ch], r.fields[cv], r.fields[cr], r.fields[cc],
                   r.fields[cs] == "labeled" ? LabelStatus::labeled : LabelStatus::unlabeled});
  return out;
}

}  // namespace clinnote::normalize
