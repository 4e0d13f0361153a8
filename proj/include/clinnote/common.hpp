#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clinnote {

using HadmId = std::string;
using SubjectId = std::string;

// Base of every error raised by the library. `kind()` is the stable name
// used in reports and logs (e.g. "SeparationDetected").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), message_(what) {}
  const std::string& kind() const noexcept { return kind_; }
  // what() without the kind prefix
  const std::string& message() const noexcept { return message_; }

 private:
  std::string kind_;
  std::string message_;
};

#define CLINNOTE_ERROR(Name)                                              \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(#Name, what) {}        \
  }

CLINNOTE_ERROR(ConfigError);
CLINNOTE_ERROR(InvalidInput);
CLINNOTE_ERROR(IoError);

#undef CLINNOTE_ERROR

// string helpers
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool contains_digit(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
// Whole (trimmed) string as a finite double, else nullopt.
std::optional<double> parse_double(std::string_view s);

// Lowercase and drop everything except [a-z0-9], so "Marital_Status",
// "marital status" and "MaritalStatus" compare equal.
std::string key_fold(std::string_view s);

// Lower-hex SHA-256 digest.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Write via a sibling temp file and rename into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Round half away from zero to `digits` decimals.
double round_to(double value, int digits);

// Median of a copy; even count returns the mean of the two middle values.
// Throws InvalidInput on empty input.
double median(std::vector<double> values);
double mean(const std::vector<double>& values);

}  // namespace clinnote
