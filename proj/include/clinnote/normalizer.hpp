#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"
#include "clinnote/gateway.hpp"
#include "clinnote/kmedoids.hpp"

namespace clinnote::normalize {

class SchemeSynthesisFailed : public Error {
 public:
  explicit SchemeSynthesisFailed(const std::string& what) : Error("SchemeSynthesisFailed", what) {}
};
class SchemeInvalid : public Error {
 public:
  explicit SchemeInvalid(const std::string& what) : Error("SchemeInvalid", what) {}
};

inline constexpr std::string_view kFallbackLabel = "Unknown/Other";
inline constexpr size_t kMinCategories = 2;
inline constexpr size_t kMaxCategories = 12;
inline constexpr int kDefaultK = 200;

struct Category {
  std::string label;
  std::string description;
};

struct CategoryScheme {
  std::string variable;
  std::vector<Category> categories;
  std::map<std::string, std::vector<std::string>> medoid_examples;  // label -> entries
  std::string model;
  std::string normalizer_prompt_sha256;
  std::string labeler_prompt_sha256;

  bool has(const std::string& label) const;
  const std::string& fallback() const;
};

// Throws SchemeInvalid describing the first broken invariant.
void validate_scheme(const CategoryScheme& scheme);

struct ClusterResult {
  std::vector<std::string> distinct_entries;
  std::vector<double> weights;  // multiplicity of each distinct entry
  cluster::MedoidClustering clustering;
  int k_requested = 0;
  bool k_lowered = false;
  std::map<size_t, size_t> size_histogram;  // cluster size -> number of clusters

  std::vector<std::string> medoid_texts() const;
};

// Deduplicates `entries` (exact text), embeds them through the gateway and
// runs PAM with duplicate counts as weights.
ClusterResult cluster_entries(llm::Gateway& gateway, const std::vector<std::string>& entries, int k,
                              std::uint64_t seed);

struct AgentConfig {
  std::string system_prompt;
  double temperature = 0.0;
  int max_tokens = 2048;
};

std::string scheme_request_content(const std::string& variable, const std::vector<std::string>& medoid_texts);
// Parses {"categories": [...]} or a bare list; appends the fallback when
// missing, then validates.
CategoryScheme parse_scheme_reply(const std::string& variable, const std::string& reply,
                                  const std::vector<std::string>& medoid_texts);

CategoryScheme synthesize_scheme(llm::Gateway& gateway, const AgentConfig& config, const std::string& variable,
                                 const std::vector<std::string>& medoid_texts);

struct EntryInput {
  HadmId hadm_id;
  std::string raw_text;
};

enum class LabelStatus { labeled, unlabeled };

struct LabeledEntry {
  HadmId hadm_id;
  std::string variable;
  std::string raw_text;
  std::string assigned_category;  // empty when unlabeled
  LabelStatus status = LabelStatus::labeled;
};

struct LabelingResult {
  std::vector<LabeledEntry> entries;
  size_t off_scheme_replies = 0;  // mapped to the fallback
  size_t unlabeled = 0;
};

std::string label_request_content(const CategoryScheme& scheme, const std::string& entry);
// Maps a labeler reply onto a scheme label; nullopt when off-scheme.
std::optional<std::string> match_label(const CategoryScheme& scheme, const std::string& reply);

LabelingResult label_entries(llm::Gateway& gateway, const AgentConfig& config, const CategoryScheme& scheme,
                             const std::vector<EntryInput>& entries);

nlohmann::json to_json(const CategoryScheme& s);
CategoryScheme scheme_from_json(const nlohmann::json& j);
std::string_view to_string(LabelStatus s);

std::string labeled_to_csv(const std::vector<LabeledEntry>& rows);
std::vector<LabeledEntry> labeled_from_csv(std::string_view text);

}  // namespace clinnote::normalize
