#include "clinnote/mock_agents.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

#include "clinnote/json_scan.hpp"

namespace clinnote::mock {

using nlohmann::json;

namespace {

struct Cat {
  const char* label;
  const char* description;
};

const std::map<std::string, std::vector<Cat>>& vocabularies() {
  static const std::map<std::string, std::vector<Cat>> v = {
      {"maritalstatus",
       {{"Married", "Married, lives with wife or husband or spouse."},
        {"Widowed", "Widowed; spouse deceased, widow or widower."},
        {"Divorced/Separated", "Divorced or separated from spouse."},
        {"Single/Never Married", "Single, never married."}}},
      {"language",
       {{"English", "Speaks English."},
        {"Spanish", "Speaks Spanish."},
        {"Portuguese", "Speaks Portuguese."},
        {"Other Non-English", "Another non-English language such as Russian, Cantonese, Haitian Creole; "
                              "interpreter needed."}}},
      {"alcoholuse",
       {{"Abstinent/No Use", "Denies alcohol, no drinking, never drinks."},
        {"Current Heavy Use", "Heavy daily drinking, alcohol abuse, several drinks daily."},
        {"Current Moderate/Social Use", "Social or moderate drinking, glass of wine or beer."},
        {"Former Heavy Use", "Former heavy drinker or prior alcohol abuse, now sober."},
        {"Former Moderate Use", "Former moderate drinker."},
        {"Occasional/Rare Use", "Occasional or rare drink."},
        {"Past Use, Not Current", "Quit drinking, past alcohol use, not current."}}},
      {"tobaccouse",
       {{"Never Smoker", "Never smoked, denies tobacco, no smoking."},
        {"Current Smoker", "Currently smokes cigarettes, active smoker, packs per day."},
        {"Former Smoker", "Former smoker who quit within recent months or years."},
        {"Remote Tobacco Use", "Remote smoking history decades back."},
        {"Occasional/Intermittent Use", "Occasional or intermittent smoking, cigars."},
        {"Past Tobacco Use", "Past tobacco use, not current."},
        {"High Pack-Year History", "Heavy pack year history."}}},
      {"druguse",
       {{"No Drug Use", "Denies illicit drugs, no drug use."},
        {"Current Drug Use", "Current illicit drug use such as cocaine or heroin."},
        {"Former Drug Use", "Former or remote drug use, quit."},
        {"Marijuana Only", "Marijuana or cannabis use only."}}},
      {"transportation",
       {{"Self-Driven", "Drives self, owns a car."},
        {"Non-Driver", "Does not drive."},
        {"Primary Transportation Method", "Uses bus, taxi or public transit."},
        {"Multiple Transportation Aids", "Uses several aids such as walker plus wheelchair van."},
        {"Arranged Transportation", "Ride or van arranged by services."},
        {"Assisted by Companion", "Family member or friend drives the patient."},
        {"Transportation Limitations", "Lacks transportation, cannot get to appointments."}}},
      {"housing",
       {{"Living Alone", "Lives alone at home or apartment."},
        {"Living with Family Members", "Lives with family: wife, husband, daughter, son, sister."},
        {"Institutional/Long-Term Care", "Lives in nursing home, rehab or long term care facility."},
        {"Homelessness/Sheltered Living", "Homeless or living in shelter."},
        {"Senior Housing/Retirement Communities", "Senior housing, assisted living or retirement community."},
        {"Residential Housing Type", "House, apartment or condo type."},
        {"Living with Non-Family Members", "Lives with friend or roommate."},
        {"Home with 24/7 Care Services", "Home with round the clock care services or home aide."},
        {"Housing Instability/Unsafe Environment", "Unstable housing, eviction or unsafe home."}}},
      {"parental",
       {{"Has Children", "Has children, daughter or son."},
        {"No Children", "No children."},
        {"Parent Deceased", "Mother or father deceased."},
        {"Lives with Parents", "Lives with mother or father."},
        {"Caregiver to Parent", "Cares for elderly mother or father."}}},
      {"employmentstatus",
       {{"Retired", "Retired from work."},
        {"Employed (Full-Time)", "Works full time, employed."},
        {"Employed (Part-Time)", "Works part time."},
        {"Unemployed", "Not working, unemployed."},
        {"On Disability", "On disability, disabled, not able to work."},
        {"Self-Employed/Own Business", "Self employed or owns a business."},
        {"Student/Other Education", "Student in school or college."}}},
      {"socialsupport",
       {{"Family Caregivers", "Family members provide care: wife, husband, daughter, son."},
        {"Professional Caregivers", "Visiting nurse, home health aide, professional services."},
        {"Social/Emotional Support", "Friends, church or emotional support."},
        {"Living Arrangements", "Support described by living arrangement."},
        {"Lack of Social Support", "Limited or no support, isolated."},
        {"Mixed Support Systems", "Both family and professional support."},
        {"Community/Non-Family Resources", "Community programs, meals on wheels, neighbors."}}},
  };
  return v;
}

const std::vector<Cat>& generic_vocabulary() {
  static const std::vector<Cat> v = {{"Present", "The factor is described."}};
  return v;
}

const std::vector<Cat>& vocabulary_for(const std::string& variable) {
  const auto& all = vocabularies();
  auto it = all.find(key_fold(variable));
  return it == all.end() ? generic_vocabulary() : it->second;
}

const std::set<std::string>& stop_words() {
  static const std::set<std::string> s = {
      "a",   "an",   "the",  "and", "or",   "of",    "with",    "to",      "in",    "on",    "at",
      "for", "is",   "was",  "per", "by",   "from",  "as",      "has",     "had",   "her",   "his",
      "he",  "she",  "pt",   "patient", "history", "status", "use", "other", "unknown", "such", "type",
      "be",  "are",  "who",  "not", "s",   "due",   "unspecified", "without", "mention", "type", "described",
  };
  return s;
}

const std::map<std::string, std::string>& expansions() {
  static const std::map<std::string, std::string> m = {
      {"denies", "no never"},     {"denied", "no never"},       {"wife", "married family"},
      {"husband", "married family"}, {"spouse", "married family"}, {"daughter", "family children"},
      {"son", "family children"}, {"sons", "family children"},  {"daughters", "family children"},
      {"children", "family children"}, {"kids", "family children"}, {"etoh", "alcohol"},
      {"drinks", "alcohol drink"}, {"ppd", "smoker pack"},     {"cigarettes", "smoker"},
      {"tob", "tobacco"},         {"quit", "former"},           {"sober", "abstinent former"},
      {"nh", "nursing home"},     {"snf", "nursing facility"},  {"chf", "congestive heart failure"},
      {"htn", "hypertension"},    {"dm", "diabetes"},           {"cad", "coronary artery disease"},
      {"afib", "atrial fibrillation"}, {"ckd", "chronic kidney disease"},
      {"copd", "chronic obstructive pulmonary disease"},        {"mi", "myocardial infarction"},
      {"esrd", "end stage renal disease"}, {"hld", "hyperlipidemia"}, {"uti", "urinary tract infection"},
      {"alone", "alone"},         {"widow", "widowed"},         {"widower", "widowed"},
  };
  return m;
}

std::string stem_word(std::string w) {
  for (const char* suf : {"ing", "ed", "es", "s"}) {
    const std::string s(suf);
    if (w.size() > s.size() + 2 && w.compare(w.size() - s.size(), s.size(), s) == 0) {
      w.erase(w.size() - s.size());
      break;
    }
  }
  return w.substr(0, 4);
}

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::isalpha(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string after(const std::string& text, const std::string& marker) {
  const auto p = text.find(marker);
  return p == std::string::npos ? std::string() : text.substr(p + marker.size());
}

std::string line_value(const std::string& text, const std::string& prefix) {
  const auto p = text.find(prefix);
  if (p == std::string::npos) return {};
  const auto e = text.find('\n', p);
  return trim(text.substr(p + prefix.size(), e == std::string::npos ? std::string::npos : e - p - prefix.size()));
}

// Best label for an entry among (label, description, examples) triples;
// empty when nothing overlaps.
std::string best_label(const std::string& entry, const json& categories) {
  for (const auto& c : categories)
    for (const auto& ex : c.value("examples", json::array()))
      if (ex.is_string() && iequals(trim(ex.get<std::string>()), trim(entry))) return c.value("label", "");
  const auto es = stems(entry);
  const std::set<std::string> entry_set(es.begin(), es.end());
  std::string best;
  double best_score = 0;
  for (const auto& c : categories) {
    const std::string label = c.value("label", "");
    if (key_fold(label) == key_fold("Unknown/Other")) continue;
    const auto ls = stems(label + " " + label + " " + c.value("description", ""));
    std::map<std::string, int> weight;
    for (const auto& s : ls) ++weight[s];
    double score = 0;
    for (const auto& s : entry_set)
      if (auto it = weight.find(s); it != weight.end()) score += 1.0 + 0.01 * it->second;
    if (score > best_score) {
      best_score = score;
      best = label;
    }
  }
  return best;
}

std::vector<std::string> sentences(const std::string& note) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < note.size(); ++i) {
    const char c = note[i];
    if (c == '\n' || (c == '.' && (i + 1 == note.size() || std::isspace(static_cast<unsigned char>(note[i + 1]))))) {
      if (c == '.') cur += c;
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

bool salient(const std::string& sentence) {
  static const std::vector<std::string> keys = {
      "heart failure", "chf", "edema", "dyspnea", "shortness", "orthopnea", "elevated", "low", "worse",
      "ejection", "bnp", "creatinine", "readmi", "diuresis", "lasix", "furosemide", "hypoxi", "decompens",
      "alcohol", "smok", "lives", "home", "follow"};
  const std::string low = to_lower(sentence);
  return std::any_of(keys.begin(), keys.end(), [&](const auto& k) { return low.find(k) != std::string::npos; });
}

std::vector<std::string> sentences_by_line(const std::string& text) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (auto line = trim(text.substr(start, end - start)); !line.empty()) out.push_back(line);
    start = end + 1;
  }
  return out;
}

std::string join_words(const std::vector<std::string>& ws, size_t limit) {
  std::string out;
  for (size_t i = 0; i < ws.size() && i < limit; ++i) {
    if (i) out += ' ';
    out += ws[i];
  }
  return out;
}

}  // namespace

std::vector<std::string> scheme_labels(const std::string& variable) {
  std::vector<std::string> out;
  for (const auto& c : vocabulary_for(variable)) out.emplace_back(c.label);
  out.emplace_back("Unknown/Other");
  return out;
}

std::vector<std::string> stems(const std::string& text) {
  std::vector<std::string> out;
  const auto& exp = expansions();
  const auto& stop = stop_words();
  for (const auto& w : words(text)) {
    std::vector<std::string> parts{w};
    if (auto it = exp.find(w); it != exp.end()) parts = words(it->second);
    for (const auto& p : parts)
      if (!stop.count(p)) out.push_back(stem_word(p));
  }
  return out;
}

double token_similarity(const std::string& a, const std::string& b) {
  const auto sa = stems(a), sb = stems(b);
  const std::set<std::string> A(sa.begin(), sa.end()), B(sb.begin(), sb.end());
  if (A.empty() || B.empty()) return 0.0;
  size_t inter = 0;
  for (const auto& s : A) inter += B.count(s);
  return static_cast<double>(inter) / static_cast<double>(A.size() + B.size() - inter);
}

std::string scheme_reply(const std::string& user_content) {
  const std::string variable = line_value(user_content, "Variable:");
  std::vector<std::string> entries;
  if (auto j = find_json_value(after(user_content, "(JSON list):")); j && j->is_array())
    for (const auto& e : *j)
      if (e.is_string()) entries.push_back(e.get<std::string>());
  json cats = json::array();
  for (const auto& c : vocabulary_for(variable))
    cats.push_back({{"label", c.label}, {"description", c.description}, {"examples", json::array()}});
  cats.push_back({{"label", "Unknown/Other"},
                  {"description", "Uninformative entry or one that fits no other category."},
                  {"examples", json::array()}});
  for (const auto& e : entries) {
    std::string label = best_label(e, cats);
    if (label.empty()) label = "Unknown/Other";
    for (auto& c : cats)
      if (c["label"] == label) c["examples"].push_back(e);
  }
  return json{{"categories", cats}}.dump();
}

std::string label_reply(const std::string& user_content) {
  const std::string cats_text = after(user_content, "Categories (JSON):\n");
  const auto entry_pos = cats_text.find("\nEntry (JSON string): ");
  if (entry_pos == std::string::npos) return R"({"category": "Unknown/Other"})";
  json cats = json::parse(cats_text.substr(0, entry_pos), nullptr, false);
  json entry = json::parse(cats_text.substr(entry_pos + 22), nullptr, false);
  if (cats.is_discarded() || !cats.is_array() || !entry.is_string()) return R"({"category": "Unknown/Other"})";
  std::string label = best_label(entry.get<std::string>(), cats);
  if (label.empty()) label = "Unknown/Other";
  return json{{"category", label}}.dump();
}

std::string judge_reply(const std::string& user_content) {
  auto parse_list = [](const std::string& block) {
    std::vector<std::string> items;
    for (const auto& line : sentences_by_line(block)) {
      const auto dot = line.find(". ");
      if (dot == std::string::npos || dot == 0) continue;
      if (!std::all_of(line.begin(), line.begin() + static_cast<long>(dot),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        continue;
      items.push_back(line.substr(dot + 2));
    }
    return items;
  };
  const auto icd_pos = user_content.find("ICD-9 diagnoses:");
  if (icd_pos == std::string::npos) return R"({"score": 0, "matches": []})";
  const auto extracted = parse_list(user_content.substr(0, icd_pos));
  std::string icd_block = user_content.substr(icd_pos);
  if (auto cut = icd_block.find("\n---"); cut != std::string::npos) icd_block.erase(cut);
  const auto icd = parse_list(icd_block);

  struct Cand {
    double sim;
    size_t e, c;
  };
  std::vector<Cand> cands;
  for (size_t e = 0; e < extracted.size(); ++e)
    for (size_t c = 0; c < icd.size(); ++c) {
      const double s = token_similarity(extracted[e], icd[c]);
      if (s >= 0.25) cands.push_back({s, e, c});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.sim > b.sim; });
  std::set<size_t> used_e, used_c;
  json matches = json::array();
  for (const auto& cd : cands) {
    if (used_e.count(cd.e) || used_c.count(cd.c)) continue;
    used_e.insert(cd.e);
    used_c.insert(cd.c);
    matches.push_back({{"extracted_index", cd.e}, {"icd_index", cd.c}});
  }
  const double denom = static_cast<double>(extracted.size() + icd.size());
  const int score = denom > 0 ? static_cast<int>(std::lround(5.0 * 2.0 * static_cast<double>(matches.size()) / denom)) : 0;
  return json{{"score", score}, {"matches", matches}}.dump();
}

std::string overall_summary_reply(const std::string& note) {
  std::vector<std::string> picked;
  for (const auto& s : sentences(note))
    if (salient(s)) picked.push_back(s);
  std::vector<std::string> ws;
  for (const auto& s : picked)
    for (const auto& w : split_whitespace(s)) ws.push_back(w);
  if (ws.empty()) ws = split_whitespace(note);
  const size_t limit = std::max<size_t>(8, split_whitespace(note).size() / 6);
  return "Summary: " + join_words(ws, limit);
}

std::string no_number_summary_reply(const std::string& user_content) {
  const std::string note = user_content.find("Discharge summary:\n") != std::string::npos
                               ? after(user_content, "Discharge summary:\n")
                               : user_content;
  std::vector<std::string> ws;
  for (const auto& w : split_whitespace(note))
    if (!contains_digit(w)) ws.push_back(w);
  const size_t limit = std::max<size_t>(8, (split_whitespace(note).size() * 2) / 5);
  return join_words(ws, limit);
}

void install_responders(llm::MockBackend& backend) {
  backend.set_responder("scheme", [](const llm::ChatRequest& r) { return std::optional(scheme_reply(r.user_content)); });
  backend.set_responder("label", [](const llm::ChatRequest& r) { return std::optional(label_reply(r.user_content)); });
  backend.set_responder("judge", [](const llm::ChatRequest& r) { return std::optional(judge_reply(r.user_content)); });
  backend.set_responder("summary_overall",
                        [](const llm::ChatRequest& r) { return std::optional(overall_summary_reply(r.user_content)); });
  backend.set_responder("summary_no_number",
                        [](const llm::ChatRequest& r) { return std::optional(no_number_summary_reply(r.user_content)); });
}

}  // namespace clinnote::mock
