#include "clinnote/csv.hpp"

#include "clinnote/common.hpp"

namespace clinnote::csv {

namespace {

struct Record {
  size_t line;
  std::vector<std::string> fields;
  bool unterminated = false;
};

std::vector<Record> tokenize(std::string_view text) {
  std::vector<Record> out;
  size_t i = 0, line = 1;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  while (i < text.size()) {
    Record rec{line, {}};
    std::string field;
    bool in_quotes = false, field_started_quoted = false;
    for (;;) {
      if (i >= text.size()) {
        if (in_quotes) rec.unterminated = true;
        rec.fields.push_back(std::move(field));
        break;
      }
      char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_started_quoted) {
        in_quotes = true;
        field_started_quoted = true;
        ++i;
      } else if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        field_started_quoted = false;
        ++i;
      } else if (c == '\r' || c == '\n') {
        if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
        ++i;
        ++line;
        rec.fields.push_back(std::move(field));
        break;
      } else {
        field.push_back(c);
        ++i;
      }
    }
    bool blank = rec.fields.size() == 1 && rec.fields[0].empty() && !field_started_quoted;
    if (!blank) out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

Table Table::parse(std::string_view text) {
  Table t;
  auto records = tokenize(text);
  if (records.empty()) return t;
  t.header_ = records.front().fields;
  for (auto& h : t.header_) h = trim(h);
  for (size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.unterminated) {
      t.rejects_.push_back({rec.line, "unterminated quoted field"});
    } else if (rec.fields.size() != t.header_.size()) {
      t.rejects_.push_back({rec.line, "expected " + std::to_string(t.header_.size()) +
                                          " fields, found " + std::to_string(rec.fields.size())});
    } else {
      t.rows_.push_back({rec.line, std::move(rec.fields)});
    }
  }
  return t;
}

Table Table::read(const std::filesystem::path& path) { return parse(read_file(path)); }

std::optional<size_t> Table::column(std::string_view name) const {
  for (size_t i = 0; i < header_.size(); ++i)
    if (iequals(header_[i], name)) return i;
  return std::nullopt;
}

size_t Table::require_column(std::string_view name, std::string_view table_name) const {
  if (auto c = column(name)) return *c;
  throw ConfigError(std::string(table_name) + " is missing required column '" + std::string(name) + "'");
}

std::string escape_field(std::string_view field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Writer::Writer(std::vector<std::string> header) : width_(header.size()) { add(header); }

void Writer::add(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw InvalidInput("csv row width mismatch");
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out_.push_back(',');
    out_ += escape_field(fields[i]);
  }
  out_.push_back('\n');
}

}  // namespace clinnote::csv
