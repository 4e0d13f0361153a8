#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clinnote/common.hpp"

namespace clinnote::vitals {

class NoData : public Error {
 public:
  explicit NoData(const std::string& what) : Error("NoData", what) {}
};

enum class Variable { temperature, hr, rr, spo2, height, weight, bp_sys, bp_dia };
inline constexpr Variable kAllVariables[] = {Variable::temperature, Variable::hr,     Variable::rr,
                                             Variable::spo2,        Variable::height, Variable::weight,
                                             Variable::bp_sys,      Variable::bp_dia};

enum class Unit { celsius, fahrenheit, cm, inch, meter, kg, lb, mmhg, bpm, breaths_per_min, percent };

enum class Status { ok, unparseable, out_of_range, inconsistent };

std::string_view to_string(Variable v);
std::string_view to_string(Unit u);
std::string_view to_string(Status s);
std::optional<Variable> variable_from_string(std::string_view s);
// Accepts the usual spellings: "F", "degF", "°C", "cm", "in", "lbs", ...
std::optional<Unit> unit_from_string(std::string_view s);
Unit canonical_unit(Variable v);

// Canonical units: °C, cm, kg, mmHg, bpm, breaths/min, %.
struct CanonicalVital {
  HadmId hadm_id;
  Variable variable = Variable::hr;
  double value = 0.0;           // canonical unit; NaN unless status is ok/out_of_range/inconsistent
  double original_value = 0.0;  // in original_unit
  std::string original_text;
  Unit original_unit = Unit::bpm;
  Status status = Status::ok;
  std::string reason;  // why the value is unusable, or a mixed-unit note

  bool usable() const { return status == Status::ok; }
};

struct Bounds {
  double lo, hi;
};
// Inclusive plausibility window in canonical units.
Bounds plausibility_bounds(Variable v);

double fahrenheit_to_celsius(double f);
double celsius_to_fahrenheit(double c);
double inches_to_cm(double in);
double cm_to_inches(double cm);
double pounds_to_kg(double lb);
double kg_to_pounds(double kg);
double to_canonical(double value, Unit unit);
double from_canonical(double value, Unit unit);

// `variable` is an extractor field name ("body_temperature", "blood_pressure",
// ...) or a canonical variable name. Blood pressure yields two entries;
// everything else yields one. Never throws for bad text: the status says
// what happened.
std::vector<CanonicalVital> parse_vital(std::string_view variable, std::string_view text,
                                        const HadmId& hadm_id = {});

// Median of the usable values for `variable`; throws NoData when none.
double aggregate_admission(const std::vector<CanonicalVital>& values, Variable variable);

std::string to_csv(const std::vector<CanonicalVital>& rows);
std::vector<CanonicalVital> from_csv(std::string_view text);

}  // namespace clinnote::vitals
