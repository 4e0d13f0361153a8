#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clinnote::csv {

struct Row {
  size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

struct Reject {
  size_t line = 0;
  std::string reason;
};

// A parsed table: header plus records. Records whose field count differs
// from the header, or that end inside an open quote, land in `rejects`.
class Table {
 public:
  static Table parse(std::string_view text);
  static Table read(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<Reject>& rejects() const { return rejects_; }

  std::optional<size_t> column(std::string_view name) const;
  // Throws ConfigError naming the missing column.
  size_t require_column(std::string_view name, std::string_view table_name) const;

 private:
  std::vector<std::string> header_;
  std::vector<Row> rows_;
  std::vector<Reject> rejects_;
};

std::string escape_field(std::string_view field);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);
  void add(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }

 private:
  size_t width_;
  std::string out_;
};

}  // namespace clinnote::csv
