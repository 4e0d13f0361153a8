#include "clinnote/prompts.hpp"

#include "clinnote/common.hpp"

namespace clinnote {

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet set;
  for (const char* name : kNames) {
    const auto path = dir / (std::string(name) + ".txt");
    if (!std::filesystem::exists(path)) throw ConfigError("prompt template missing: " + path.string());
    std::string text = trim(read_file(path));
    set.prompts_[name] = {name, text, sha256_hex(text)};
  }
  return set;
}

const PromptTemplate& PromptSet::get(const std::string& name) const {
  auto it = prompts_.find(name);
  if (it == prompts_.end()) throw ConfigError("unknown prompt template " + name);
  return it->second;
}

}  // namespace clinnote
