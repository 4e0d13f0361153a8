#include "clinnote/json_scan.hpp"

#include "clinnote/common.hpp"

namespace clinnote {

namespace {

using nlohmann::json;

// Index just past the bracketed value starting at `open`, or npos.
size_t balanced_end(std::string_view text, size_t open) {
  const char opener = text[open];
  const char closer = opener == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false, escaped = false;
  for (size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == opener) ++depth;
    else if (c == closer && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<json> try_parse(std::string_view text, bool allow_array) {
  try {
    auto j = json::parse(text);
    if (j.is_object() || (allow_array && j.is_array())) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

std::optional<json> scan_bare(std::string_view text, bool allow_array) {
  for (size_t pos = 0; pos < text.size(); ++pos) {
    if (text[pos] != '{' && !(allow_array && text[pos] == '[')) continue;
    size_t end = balanced_end(text, pos);
    if (end == std::string_view::npos) continue;
    if (auto j = try_parse(text.substr(pos, end - pos), allow_array)) return j;
  }
  return std::nullopt;
}

std::optional<json> find(std::string_view text, bool allow_array) {
  for (size_t pos = text.find("```"); pos != std::string_view::npos;) {
    size_t body = text.find('\n', pos + 3);
    if (body == std::string_view::npos) break;
    size_t close = text.find("```", body + 1);
    if (close == std::string_view::npos) break;
    auto inner = text.substr(body + 1, close - body - 1);
    if (auto j = try_parse(trim(inner), allow_array)) return j;
    if (auto j = scan_bare(inner, allow_array)) return j;
    pos = text.find("```", close + 3);
  }
  return scan_bare(text, allow_array);
}

}  // namespace

std::optional<json> find_json_object(std::string_view text) { return find(text, false); }
std::optional<json> find_json_value(std::string_view text) { return find(text, true); }

}  // namespace clinnote
