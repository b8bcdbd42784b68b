#pragma once

// Pseudo-rigid-body model of a beam-shaped pneumatic finger: one torsional
// spring joint at (1 - gamma) * l, a rigid distal link of length gamma * l.
//
// Canonical equation of motion (physical, unnormalized coefficients):
//
//   A * theta'' + b * theta' + k * theta = N * p - J(theta) . f
//
// with A = 7/12 m gamma^3 l^2, N the pressure-to-moment constant of the
// chamber cross-section and J the 1x2 tip Jacobian.

#include <array>
#include <cmath>
#include <string>

#include "prbm/errors.hpp"

namespace prbm {

struct FingerGeometry {
  double mass_kg = 0.0;
  double length_m = 0.0;
  double gamma = 0.85;
  double width_e_m = 0.0;
  double wall_a_m = 0.0;
  double chamber_b_m = 0.0;
  double arm_larm_m = 0.0;

  void validate() const {
    auto finite = [](const char* name, double v) {
      if (!std::isfinite(v)) throw ValidationError(name, "must be finite");
    };
    finite("mass_kg", mass_kg);
    finite("length_m", length_m);
    finite("gamma", gamma);
    finite("width_e_m", width_e_m);
    finite("wall_a_m", wall_a_m);
    finite("chamber_b_m", chamber_b_m);
    finite("arm_larm_m", arm_larm_m);
    if (!(mass_kg > 0.0)) throw ValidationError("mass_kg", "must be > 0");
    if (!(length_m > 0.0)) throw ValidationError("length_m", "must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma", "must lie in (0, 1)");
    if (!(wall_a_m >= 0.0)) throw ValidationError("wall_a_m", "must be >= 0");
    if (!(width_e_m > 2.0 * wall_a_m))
      throw ValidationError("width_e_m", "must exceed 2 * wall_a_m");
    if (!(chamber_b_m > 0.0)) throw ValidationError("chamber_b_m", "must be > 0");
    if (!(arm_larm_m >= 0.0)) throw ValidationError("arm_larm_m", "must be >= 0");
  }

  /// Half the distal link length, gamma * l / 2. Also the norm of the Jacobian.
  double half_link() const noexcept { return 0.5 * gamma * length_m; }
};

struct DynamicCoefficients {
  double inertia_A = 0.0;   // kg m^2
  double stiffness_k = 0.0; // N m / rad
  double damping_b = 0.0;   // N m s / rad
  double moment_N = 0.0;    // m^3

  void validate() const {
    if (!(std::isfinite(inertia_A) && inertia_A > 0.0))
      throw ValidationError("inertia_A", "must be finite and > 0");
    if (!(std::isfinite(stiffness_k) && stiffness_k > 0.0))
      throw ValidationError("stiffness_k", "must be finite and > 0");
    if (!(std::isfinite(damping_b) && damping_b >= 0.0))
      throw ValidationError("damping_b", "must be finite and >= 0");
    if (!(std::isfinite(moment_N) && moment_N > 0.0))
      throw ValidationError("moment_N", "must be finite and > 0");
  }

  /// sqrt(k / A), rad/s.
  double natural_frequency() const { return std::sqrt(stiffness_k / inertia_A); }
  /// b / (2 sqrt(k A)).
  double damping_ratio() const { return damping_b / (2.0 * std::sqrt(stiffness_k * inertia_A)); }
  /// Normalized damping D = b / A.
  double normalized_damping() const { return damping_b / inertia_A; }
  /// Normalized stiffness K = k / A.
  double normalized_stiffness() const { return stiffness_k / inertia_A; }
};

struct FingerState {
  double theta_rad = 0.0;
  double theta_dot_rad_s = 0.0;
};

struct TipForce {
  double fx_N = 0.0;
  double fy_N = 0.0;

  friend bool operator==(const TipForce&, const TipForce&) = default;
};

struct TipPosition {
  double x_m = 0.0;
  double y_m = 0.0;
};

/// Row vector [Jx, Jy] mapping theta' to the tip velocity.
struct Jacobian {
  double jx = 0.0;
  double jy = 0.0;

  double dot(const TipForce& f) const noexcept { return jx * f.fx_N + jy * f.fy_N; }
  double norm() const noexcept { return std::hypot(jx, jy); }
};

namespace formula {

inline double inertia(double mass_kg, double gamma, double length_m) {
  return 7.0 / 12.0 * mass_kg * gamma * gamma * gamma * length_m * length_m;
}

/// Closed form of the integral of (e - 2a) h dh over [a + l_arm, a + b + l_arm].
inline double moment(double width_e, double wall_a, double chamber_b, double arm_larm) {
  const double lo = wall_a + arm_larm;
  const double hi = wall_a + chamber_b + arm_larm;
  // hi^2 - lo^2 = (hi - lo)(hi + lo) avoids cancellation for thin chambers.
  return (width_e - 2.0 * wall_a) * chamber_b * (hi + lo) / 2.0;
}

}  // namespace formula

inline double inertia_coefficient(const FingerGeometry& geom) {
  geom.validate();
  return formula::inertia(geom.mass_kg, geom.gamma, geom.length_m);
}

inline double moment_constant(const FingerGeometry& geom) {
  geom.validate();
  return formula::moment(geom.width_e_m, geom.wall_a_m, geom.chamber_b_m, geom.arm_larm_m);
}

/// Builds the full coefficient set from geometry plus identified k and b.
inline DynamicCoefficients make_coefficients(const FingerGeometry& geom, double stiffness_k,
                                             double damping_b) {
  DynamicCoefficients c{inertia_coefficient(geom), stiffness_k, damping_b, moment_constant(geom)};
  c.validate();
  return c;
}

inline TipPosition tip_position(const FingerGeometry& geom, double theta) {
  geom.validate();
  const double h = geom.half_link();
  return {(1.0 - geom.gamma) * geom.length_m + h * std::cos(theta), h * std::sin(theta)};
}

inline Jacobian jacobian(const FingerGeometry& geom, double theta) {
  geom.validate();
  const double h = geom.half_link();
  return {-h * std::sin(theta), -h * std::cos(theta)};
}

/// Quasi-static map p = k theta / N. Not clamped; callers apply actuator limits.
inline double pressure_for_angle(const DynamicCoefficients& coef, double theta_des) {
  return coef.stiffness_k * theta_des / coef.moment_N;
}

/// Quasi-static map under tip load: p = (k theta + J(theta) . f) / N.
inline double pressure_for_force(const DynamicCoefficients& coef, const FingerGeometry& geom,
                                 double theta, const TipForce& f) {
  return (coef.stiffness_k * theta + jacobian(geom, theta).dot(f)) / coef.moment_N;
}

/// Tip force from the residual moment, F = (J^T)^+ (N p - k theta).
///
/// J^T is a 2x1 column of constant norm gamma l / 2, so its Moore-Penrose
/// inverse is J / |J|^2 and the estimate always lies along J.
inline TipForce estimate_force(const DynamicCoefficients& coef, const FingerGeometry& geom,
                               double p_in, double theta_real) {
  const Jacobian j = jacobian(geom, theta_real);
  const double n2 = j.jx * j.jx + j.jy * j.jy;
  const double residual = coef.moment_N * p_in - coef.stiffness_k * theta_real;
  return {j.jx * residual / n2, j.jy * residual / n2};
}

/// Unit vector along J(theta). A positive force along it opposes bending.
inline TipForce contact_normal(const FingerGeometry& geom, double theta) {
  const Jacobian j = jacobian(geom, theta);
  const double n = j.norm();
  return {j.jx / n, j.jy / n};
}

}  // namespace prbm
