#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace clinnote {

struct PromptTemplate {
  std::string name;  // file stem, e.g. "extractor"
  std::string text;
  std::string sha256;
};

// The six agent prompts, read from <dir>/<name>.txt.
class PromptSet {
 public:
  static PromptSet load(const std::filesystem::path& dir);

  const PromptTemplate& get(const std::string& name) const;
  const std::map<std::string, PromptTemplate>& all() const { return prompts_; }

  static constexpr const char* kNames[] = {"extractor", "summary_overall", "summary_no_number",
                                           "normalizer", "labeler", "judge"};

 private:
  std::map<std::string, PromptTemplate> prompts_;
};

}  // namespace clinnote
