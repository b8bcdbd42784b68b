#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prbm/errors.hpp"

namespace prbm {

enum class Unit { angle_rad, angle_deg, voltage_mV, pressure_Pa, force_N };

inline std::string_view to_string(Unit u) {
  switch (u) {
    case Unit::angle_rad: return "angle_rad";
    case Unit::angle_deg: return "angle_deg";
    case Unit::voltage_mV: return "voltage_mV";
    case Unit::pressure_Pa: return "pressure_Pa";
    case Unit::force_N: return "force_N";
  }
  return "unknown";
}

inline std::optional<Unit> parse_unit(std::string_view s) {
  for (Unit u : {Unit::angle_rad, Unit::angle_deg, Unit::voltage_mV, Unit::pressure_Pa,
                 Unit::force_N}) {
    if (to_string(u) == s) return u;
  }
  return std::nullopt;
}

/// Uniformly sampled time series starting at t = 0.
struct Trace {
  double sample_rate_hz = 0.0;
  std::vector<double> values;
  Unit unit = Unit::angle_rad;

  Trace() = default;
  Trace(double rate, std::vector<double> v, Unit u)
      : sample_rate_hz(rate), values(std::move(v)), unit(u) {}

  void validate() const {
    if (!(std::isfinite(sample_rate_hz) && sample_rate_hz > 0.0))
      throw ValidationError("sample_rate_hz", "must be finite and > 0");
    if (values.size() < 2) throw ValidationError("values", "need at least 2 samples");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]))
        throw ValidationError("values", "sample " + std::to_string(i) + " is not finite");
    }
  }

  std::size_t size() const noexcept { return values.size(); }
  double dt() const noexcept { return 1.0 / sample_rate_hz; }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) / sample_rate_hz; }
  double duration() const noexcept { return time(values.empty() ? 0 : values.size() - 1); }
};

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Converts between angle_rad and angle_deg; any other change of unit throws.
inline Trace to_unit(Trace t, Unit target) {
  if (t.unit == target) return t;
  if (t.unit == Unit::angle_deg && target == Unit::angle_rad) {
    for (double& v : t.values) v = deg_to_rad(v);
  } else if (t.unit == Unit::angle_rad && target == Unit::angle_deg) {
    for (double& v : t.values) v = rad_to_deg(v);
  } else {
    throw ParameterError("cannot convert " + std::string(to_string(t.unit)) + " to " +
                         std::string(to_string(target)));
  }
  t.unit = target;
  return t;
}

}  // namespace prbm
