#include "clinnote/vitals.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "clinnote/csv.hpp"

namespace clinnote::vitals {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLbToKg = 0.45359237;
constexpr double kInToCm = 2.54;

struct Number {
  double value;
  size_t begin, end;
};

std::vector<Number> numbers_in(std::string_view text) {
  std::vector<Number> out;
  size_t i = 0;
  while (i < text.size()) {
    const bool digit = std::isdigit(static_cast<unsigned char>(text[i]));
    const bool dot_digit = text[i] == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!digit && !dot_digit) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
      ++j;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    }
    std::string token(text.substr(i, j - i));
    if (token.front() == '.') token.insert(token.begin(), '0');
    out.push_back({std::stod(token), i, j});
    i = j;
  }
  return out;
}

// Lowercased alphabetic marker right after a number, skipping blanks,
// degree signs and "deg"/"degrees".
std::string marker_after(std::string_view text, size_t pos) {
  auto skip = [&] {
    while (pos < text.size()) {
      unsigned char c = static_cast<unsigned char>(text[pos]);
      if (std::isspace(c)) {
        ++pos;
      } else if (text.substr(pos, 2) == "\xC2\xB0") {  // UTF-8 degree sign
        pos += 2;
      } else if (c == 0xB0 || c == '*') {
        ++pos;
      } else {
        break;
      }
    }
  };
  skip();
  if (pos < text.size() && (text[pos] == '\'' || text[pos] == '"' || text[pos] == '%' || text[pos] == '#'))
    return std::string(1, text[pos]);
  std::string word;
  while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos])))
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[pos++]))));
  if (word == "deg" || word == "degree" || word == "degrees") {
    skip();
    word.clear();
    while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos])))
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[pos++]))));
    if (word.empty()) return "deg";
  }
  return word;
}

std::optional<Unit> temperature_unit(const std::string& m) {
  if (m == "f" || m == "degf" || m == "fahrenheit") return Unit::fahrenheit;
  if (m == "c" || m == "degc" || m == "celsius" || m == "centigrade") return Unit::celsius;
  return std::nullopt;
}

CanonicalVital base(Variable v, std::string_view text, const HadmId& hadm) {
  CanonicalVital cv;
  cv.hadm_id = hadm;
  cv.variable = v;
  cv.original_text = std::string(text);
  cv.original_unit = canonical_unit(v);
  cv.value = kNaN;
  cv.original_value = kNaN;
  return cv;
}

CanonicalVital unparseable(Variable v, std::string_view text, const HadmId& hadm, std::string reason) {
  auto cv = base(v, text, hadm);
  cv.status = Status::unparseable;
  cv.reason = std::move(reason);
  return cv;
}

CanonicalVital finish(CanonicalVital cv, double original, Unit unit) {
  cv.original_value = original;
  cv.original_unit = unit;
  cv.value = to_canonical(original, unit);
  const auto b = plausibility_bounds(cv.variable);
  if (!std::isfinite(cv.value)) {
    cv.status = Status::unparseable;
    cv.reason = "non-finite value";
  } else if (cv.value < b.lo || cv.value > b.hi) {
    cv.status = Status::out_of_range;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f outside [%g, %g]", cv.value, b.lo, b.hi);
    cv.reason = buf;
  }
  return cv;
}

CanonicalVital parse_temperature(std::string_view text, const HadmId& hadm) {
  auto nums = numbers_in(text);
  if (nums.empty()) return unparseable(Variable::temperature, text, hadm, "no numeric token");
  const auto& first = nums.front();
  auto unit = temperature_unit(marker_after(text, first.end));
  if (!unit) unit = first.value > 45.0 ? Unit::fahrenheit : Unit::celsius;
  auto cv = finish(base(Variable::temperature, text, hadm), first.value, *unit);
  // "98.6F (37C)": check the second reading agrees with the first.
  for (size_t k = 1; k < nums.size(); ++k) {
    auto other = temperature_unit(marker_after(text, nums[k].end));
    if (!other || *other == *unit) continue;
    const double delta = std::abs(to_canonical(nums[k].value, *other) - cv.value);
    if (cv.reason.empty())
      cv.reason = delta <= 0.2 ? "mixed units agree" : "mixed units disagree; first reading kept";
    break;
  }
  return cv;
}

CanonicalVital parse_height(std::string_view text, const HadmId& hadm) {
  auto nums = numbers_in(text);
  if (nums.empty()) return unparseable(Variable::height, text, hadm, "no numeric token");
  const auto& first = nums.front();
  const std::string m = marker_after(text, first.end);
  auto cv = base(Variable::height, text, hadm);
  if (m == "'" || m == "ft" || m == "feet" || m == "foot") {
    double inches = first.value * 12.0;
    if (nums.size() > 1) {
      const std::string m2 = marker_after(text, nums[1].end);
      if (m2.empty() || m2 == "\"" || m2 == "in" || m2 == "inch" || m2 == "inches" || m2 == "'") inches += nums[1].value;
    }
    cv.reason = "feet-inches";
    return finish(cv, inches, Unit::inch);
  }
  if (m == "cm" || m == "centimeters" || m == "centimeter") return finish(cv, first.value, Unit::cm);
  if (m == "m" || m == "meter" || m == "meters") return finish(cv, first.value, Unit::meter);
  if (m == "\"" || m == "in" || m == "inch" || m == "inches") return finish(cv, first.value, Unit::inch);
  if (first.value > 90.0) return finish(cv, first.value, Unit::cm);
  if (first.value <= 2.5) return finish(cv, first.value, Unit::meter);
  if (first.value <= 8.0) {
    cv.reason = "unmarked value read as feet";
    return finish(cv, first.value * 12.0, Unit::inch);
  }
  return finish(cv, first.value, Unit::inch);
}

CanonicalVital parse_weight(std::string_view text, const HadmId& hadm) {
  auto nums = numbers_in(text);
  if (nums.empty()) return unparseable(Variable::weight, text, hadm, "no numeric token");
  const auto& first = nums.front();
  const std::string m = marker_after(text, first.end);
  auto cv = base(Variable::weight, text, hadm);
  if (m == "kg" || m == "kgs" || m == "kilogram" || m == "kilograms") return finish(cv, first.value, Unit::kg);
  if (m == "lb" || m == "lbs" || m == "pound" || m == "pounds" || m == "#")
    return finish(cv, first.value, Unit::lb);
  return finish(cv, first.value, first.value > 250.0 ? Unit::lb : Unit::kg);
}

CanonicalVital parse_simple(Variable v, std::string_view text, const HadmId& hadm) {
  auto nums = numbers_in(text);
  if (nums.empty()) return unparseable(v, text, hadm, "no numeric token");
  return finish(base(v, text, hadm), nums.front().value, canonical_unit(v));
}

std::vector<CanonicalVital> parse_bp(std::string_view text, const HadmId& hadm) {
  auto nums = numbers_in(text);
  for (size_t k = 0; k + 1 < nums.size(); ++k) {
    std::string_view between = text.substr(nums[k].end, nums[k + 1].begin - nums[k].end);
    if (trim(between) != "/") continue;
    auto sys = finish(base(Variable::bp_sys, text, hadm), nums[k].value, Unit::mmhg);
    auto dia = finish(base(Variable::bp_dia, text, hadm), nums[k + 1].value, Unit::mmhg);
    if (sys.usable() && dia.usable() && sys.value < dia.value) {
      sys.status = dia.status = Status::inconsistent;
      sys.reason = dia.reason = "systolic below diastolic";
    }
    return {sys, dia};
  }
  const std::string reason = nums.empty() ? "no numeric token" : "no systolic/diastolic pair";
  return {unparseable(Variable::bp_sys, text, hadm, reason), unparseable(Variable::bp_dia, text, hadm, reason)};
}

}  // namespace

std::string_view to_string(Variable v) {
  switch (v) {
    case Variable::temperature: return "temperature";
    case Variable::hr: return "hr";
    case Variable::rr: return "rr";
    case Variable::spo2: return "spo2";
    case Variable::height: return "height";
    case Variable::weight: return "weight";
    case Variable::bp_sys: return "bp_sys";
    case Variable::bp_dia: return "bp_dia";
  }
  return "";
}

std::string_view to_string(Unit u) {
  switch (u) {
    case Unit::celsius: return "C";
    case Unit::fahrenheit: return "F";
    case Unit::cm: return "cm";
    case Unit::inch: return "in";
    case Unit::meter: return "m";
    case Unit::kg: return "kg";
    case Unit::lb: return "lb";
    case Unit::mmhg: return "mmHg";
    case Unit::bpm: return "bpm";
    case Unit::breaths_per_min: return "breaths/min";
    case Unit::percent: return "%";
  }
  return "";
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::unparseable: return "unparseable";
    case Status::out_of_range: return "out_of_range";
    case Status::inconsistent: return "inconsistent";
  }
  return "";
}

std::optional<Variable> variable_from_string(std::string_view s) {
  const std::string k = key_fold(s);
  if (k == "temperature" || k == "bodytemperature" || k == "temp") return Variable::temperature;
  if (k == "hr" || k == "heartrate") return Variable::hr;
  if (k == "rr" || k == "respirationrate" || k == "respiratoryrate") return Variable::rr;
  if (k == "spo2") return Variable::spo2;
  if (k == "height") return Variable::height;
  if (k == "weight") return Variable::weight;
  if (k == "bpsys") return Variable::bp_sys;
  if (k == "bpdia") return Variable::bp_dia;
  return std::nullopt;
}

std::optional<Unit> unit_from_string(std::string_view s) {
  std::string k = to_lower(trim(s));
  k = replace_all(k, "\xC2\xB0", "");
  k = replace_all(k, " ", "");
  if (k == "c" || k == "degc" || k == "celsius") return Unit::celsius;
  if (k == "f" || k == "degf" || k == "fahrenheit") return Unit::fahrenheit;
  if (k == "cm") return Unit::cm;
  if (k == "in" || k == "inch" || k == "inches") return Unit::inch;
  if (k == "m") return Unit::meter;
  if (k == "kg") return Unit::kg;
  if (k == "lb" || k == "lbs") return Unit::lb;
  if (k == "mmhg") return Unit::mmhg;
  if (k == "bpm" || k == "beats/min") return Unit::bpm;
  if (k == "breaths/min" || k == "insp/min" || k == "/min") return Unit::breaths_per_min;
  if (k == "%") return Unit::percent;
  return std::nullopt;
}

Unit canonical_unit(Variable v) {
  switch (v) {
    case Variable::temperature: return Unit::celsius;
    case Variable::hr: return Unit::bpm;
    case Variable::rr: return Unit::breaths_per_min;
    case Variable::spo2: return Unit::percent;
    case Variable::height: return Unit::cm;
    case Variable::weight: return Unit::kg;
    case Variable::bp_sys:
    case Variable::bp_dia: return Unit::mmhg;
  }
  return Unit::bpm;
}

Bounds plausibility_bounds(Variable v) {
  switch (v) {
    case Variable::temperature: return {30.0, 45.0};
    case Variable::hr: return {20.0, 300.0};
    case Variable::rr: return {4.0, 80.0};
    case Variable::spo2: return {50.0, 100.0};
    case Variable::height: return {100.0, 250.0};
    case Variable::weight: return {20.0, 350.0};
    case Variable::bp_sys:
    case Variable::bp_dia: return {30.0, 300.0};
  }
  return {0, 0};
}

double fahrenheit_to_celsius(double f) { return (f - 32.0) * 5.0 / 9.0; }
double celsius_to_fahrenheit(double c) { return c * 9.0 / 5.0 + 32.0; }
double inches_to_cm(double in) { return in * kInToCm; }
double cm_to_inches(double cm) { return cm / kInToCm; }
double pounds_to_kg(double lb) { return lb * kLbToKg; }
double kg_to_pounds(double kg) { return kg / kLbToKg; }

double to_canonical(double value, Unit unit) {
  switch (unit) {
    case Unit::fahrenheit: return fahrenheit_to_celsius(value);
    case Unit::inch: return inches_to_cm(value);
    case Unit::meter: return value * 100.0;
    case Unit::lb: return pounds_to_kg(value);
    default: return value;
  }
}

double from_canonical(double value, Unit unit) {
  switch (unit) {
    case Unit::fahrenheit: return celsius_to_fahrenheit(value);
    case Unit::inch: return cm_to_inches(value);
    case Unit::meter: return value / 100.0;
    case Unit::lb: return kg_to_pounds(value);
    default: return value;
  }
}

std::vector<CanonicalVital> parse_vital(std::string_view variable, std::string_view text, const HadmId& hadm_id) {
  const std::string k = key_fold(variable);
  if (k == "bloodpressure" || k == "bp") return parse_bp(text, hadm_id);
  auto v = variable_from_string(variable);
  if (!v || *v == Variable::bp_sys || *v == Variable::bp_dia)
    throw InvalidInput("unknown vital variable '" + std::string(variable) + "'");
  switch (*v) {
    case Variable::temperature: return {parse_temperature(text, hadm_id)};
    case Variable::height: return {parse_height(text, hadm_id)};
    case Variable::weight: return {parse_weight(text, hadm_id)};
    default: return {parse_simple(*v, text, hadm_id)};
  }
}

double aggregate_admission(const std::vector<CanonicalVital>& values, Variable variable) {
  std::vector<double> xs;
  for (const auto& v : values)
    if (v.variable == variable && v.usable()) xs.push_back(v.value);
  if (xs.empty()) throw NoData("no usable " + std::string(to_string(variable)) + " values");
  return median(std::move(xs));
}

namespace {
std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
}  // namespace

std::string to_csv(const std::vector<CanonicalVital>& rows) {
  csv::Writer w({"hadm_id", "variable", "value", "original_text", "original_unit", "status", "original_value",
                 "reason"});
  for (const auto& r : rows)
    w.add({r.hadm_id, std::string(to_string(r.variable)), fmt_double(r.value), r.original_text,
           std::string(to_string(r.original_unit)), std::string(to_string(r.status)), fmt_double(r.original_value),
           r.reason});
  return w.str();
}

std::vector<CanonicalVital> from_csv(std::string_view text) {
  auto t = csv::Table::parse(text);
  if (!t.rejects().empty()) throw InvalidInput("malformed canonical_vitals.csv");
  const auto c_h = t.require_column("hadm_id", "canonical_vitals.csv");
  const auto c_var = t.require_column("variable", "canonical_vitals.csv");
  const auto c_val = t.require_column("value", "canonical_vitals.csv");
  const auto c_txt = t.require_column("original_text", "canonical_vitals.csv");
  const auto c_unit = t.require_column("original_unit", "canonical_vitals.csv");
  const auto c_st = t.require_column("status", "canonical_vitals.csv");
  const auto c_ov = t.column("original_value");
  const auto c_reason = t.column("reason");
  std::vector<CanonicalVital> out;
  for (const auto& r : t.rows()) {
    CanonicalVital cv;
    cv.hadm_id = r.fields[c_h];
    auto var = variable_from_string(r.fields[c_var]);
    auto unit = unit_from_string(r.fields[c_unit]);
    if (!var || !unit) throw InvalidInput("bad variable/unit in canonical_vitals.csv line " + std::to_string(r.line));
    cv.variable = *var;
    cv.original_unit = *unit;
    cv.value = r.fields[c_val].empty() ? kNaN : std::stod(r.fields[c_val]);
    cv.original_text = r.fields[c_txt];
    const std::string st = r.fields[c_st];
    cv.status = st == "ok" ? Status::ok
                : st == "out_of_range" ? Status::out_of_range
                : st == "inconsistent" ? Status::inconsistent
                                        : Status::unparseable;
    if (c_ov) cv.original_value = r.fields[*c_ov].empty() ? kNaN : std::stod(r.fields[*c_ov]);
    if (c_reason) cv.reason = r.fields[*c_reason];
    out.push_back(std::move(cv));
  }
  return out;
}

}  // namespace clinnote::vitals
