#pragma once

// Fixed-step RK4 plant standing in for the physical finger.
//
// State is (theta, theta', p_applied). The valve is a first-order lag from
// the clamped command to the chamber pressure; optional rigid stops bound
// theta and absorb the finger's momentum on impact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "prbm/errors.hpp"
#include "prbm/model.hpp"
#include "prbm/trace.hpp"

namespace prbm::sim {

struct PressureLimits {
  double min_Pa = 0.0;
  double max_Pa = 200e3;

  double clamp(double p) const { return std::clamp(p, min_Pa, max_Pa); }
};

struct PlantConfig {
  FingerGeometry geometry;
  DynamicCoefficients coefficients;  // ground truth
  double dt_s = 1e-3;
  PressureLimits pressure_limits;
  double actuator_bandwidth_hz = 10.0;
  std::optional<double> upper_stop_rad;  // rigid contact, e.g. an object surface
  std::optional<double> lower_stop_rad;

  void validate() const {
    geometry.validate();
    coefficients.validate();
    if (!(std::isfinite(dt_s) && dt_s > 0.0)) throw ValidationError("dt_s", "must be > 0");
    const double wn = coefficients.natural_frequency();
    if (dt_s > 1.0 / (20.0 * wn))
      throw ValidationError("dt_s", "must not exceed 1/(20 wn) = " + std::to_string(1.0 / (20.0 * wn)));
    if (!(pressure_limits.min_Pa >= 0.0))
      throw ValidationError("pressure_limits_Pa", "minimum must be >= 0");
    if (!(pressure_limits.max_Pa > pressure_limits.min_Pa))
      throw ValidationError("pressure_limits_Pa", "maximum must exceed minimum");
    if (!(std::isfinite(actuator_bandwidth_hz) && actuator_bandwidth_hz > 0.0))
      throw ValidationError("actuator_bandwidth_hz", "must be finite and > 0");
    if (upper_stop_rad && lower_stop_rad && !(*upper_stop_rad > *lower_stop_rad))
      throw ValidationError("upper_stop_rad", "must exceed lower_stop_rad");
  }
};

struct PlantState {
  FingerState finger;
  double pressure_Pa = 0.0;  // applied chamber pressure after the valve lag
};

namespace detail {

struct Deriv {
  double theta, omega, pressure;
};

inline Deriv derivatives(const PlantConfig& plant, double theta, double omega, double p,
                         double p_target, const TipForce& f_ext) {
  const auto& c = plant.coefficients;
  const double load = jacobian(plant.geometry, theta).dot(f_ext);
  const double alpha = (c.moment_N * p - c.damping_b * omega - c.stiffness_k * theta - load) / c.inertia_A;
  const double lag = 2.0 * kPi * plant.actuator_bandwidth_hz;
  return {omega, alpha, lag * (p_target - p)};
}

}  // namespace detail

/// Advances the plant by one dt with a held command and external tip force.
inline PlantState step(const PlantConfig& plant, const PlantState& s, double p_cmd,
                       const TipForce& f_ext = {}) {
  if (!std::isfinite(p_cmd)) throw ParameterError("pressure command is not finite");
  const double h = plant.dt_s;
  const double target = plant.pressure_limits.clamp(p_cmd);
  const double th = s.finger.theta_rad, om = s.finger.theta_dot_rad_s, p = s.pressure_Pa;

  using detail::derivatives;
  const auto k1 = derivatives(plant, th, om, p, target, f_ext);
  const auto k2 = derivatives(plant, th + 0.5 * h * k1.theta, om + 0.5 * h * k1.omega,
                              p + 0.5 * h * k1.pressure, target, f_ext);
  const auto k3 = derivatives(plant, th + 0.5 * h * k2.theta, om + 0.5 * h * k2.omega,
                              p + 0.5 * h * k2.pressure, target, f_ext);
  const auto k4 = derivatives(plant, th + h * k3.theta, om + h * k3.omega, p + h * k3.pressure,
                              target, f_ext);

  PlantState next;
  next.finger.theta_rad = th + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
  next.finger.theta_dot_rad_s =
      om + h / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega);
  next.pressure_Pa = plant.pressure_limits.clamp(
      p + h / 6.0 * (k1.pressure + 2.0 * k2.pressure + 2.0 * k3.pressure + k4.pressure));

  if (!std::isfinite(next.finger.theta_rad) || !std::isfinite(next.finger.theta_dot_rad_s) ||
      !std::isfinite(next.pressure_Pa)) {
    throw DivergenceError("plant state became non-finite (dt_s = " + std::to_string(h) + ")");
  }
  // Stops are plastic: reaching one zeroes the velocity.
  if (plant.upper_stop_rad && next.finger.theta_rad >= *plant.upper_stop_rad) {
    next.finger.theta_rad = *plant.upper_stop_rad;
    next.finger.theta_dot_rad_s = 0.0;
  }
  if (plant.lower_stop_rad && next.finger.theta_rad <= *plant.lower_stop_rad) {
    next.finger.theta_rad = *plant.lower_stop_rad;
    next.finger.theta_dot_rad_s = 0.0;
  }
  return next;
}

/// Reaction force of the upper stop on the fingertip, along J(theta).
/// Zero unless the finger rests on the stop and presses into it.
inline TipForce contact_force(const PlantConfig& plant, const PlantState& s,
                              const TipForce& f_ext = {}) {
  if (!plant.upper_stop_rad || s.finger.theta_rad < *plant.upper_stop_rad ||
      s.finger.theta_dot_rad_s != 0.0) {
    return {};
  }
  const auto& c = plant.coefficients;
  const double th = s.finger.theta_rad;
  const Jacobian j = jacobian(plant.geometry, th);
  const double pushing = c.moment_N * s.pressure_Pa - c.stiffness_k * th - j.dot(f_ext);
  if (pushing <= 0.0) return {};
  const double mag = pushing / j.norm();
  const TipForce n = contact_normal(plant.geometry, th);
  return {mag * n.fx_N, mag * n.fy_N};
}

struct SimResult {
  Trace theta{0.0, {}, Unit::angle_rad};
  Trace theta_dot{0.0, {}, Unit::angle_rad};  // rad/s; no dedicated rate unit
  Trace pressure_applied{0.0, {}, Unit::pressure_Pa};
  Trace force_x{0.0, {}, Unit::force_N};
  Trace force_y{0.0, {}, Unit::force_N};

  void init(double rate, std::size_t reserve) {
    for (Trace* t : {&theta, &theta_dot, &pressure_applied, &force_x, &force_y}) {
      t->sample_rate_hz = rate;
      t->values.reserve(reserve);
    }
  }
  void record(const PlantState& s, const TipForce& tip) {
    theta.values.push_back(s.finger.theta_rad);
    theta_dot.values.push_back(s.finger.theta_dot_rad_s);
    pressure_applied.values.push_back(s.pressure_Pa);
    force_x.values.push_back(tip.fx_N);
    force_y.values.push_back(tip.fy_N);
  }
};

/// Integer number of plant steps per output sample; throws if not integral.
inline std::size_t steps_per_sample(const PlantConfig& plant, double output_rate_hz) {
  if (!(output_rate_hz > 0.0)) throw ParameterError("output rate must be > 0");
  const double ratio = 1.0 / (plant.dt_s * output_rate_hz);
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * r)
    throw ParameterError("output rate must divide the integration rate 1/dt_s");
  return static_cast<std::size_t>(r);
}

/// Unforced release from (theta0, 0) with optional seeded Gaussian noise on theta.
inline SimResult run_free_decay(const PlantConfig& plant, double theta0, double duration_s,
                                double noise_sd, std::uint64_t seed = 0,
                                double output_rate_hz = 100.0) {
  plant.validate();
  if (theta0 == 0.0 || !std::isfinite(theta0)) throw ParameterError("theta0 must be non-zero");
  if (!(duration_s > 0.0)) throw ParameterError("duration must be > 0");
  if (!(noise_sd >= 0.0)) throw ParameterError("noise sd must be >= 0");
  const std::size_t sub = steps_per_sample(plant, output_rate_hz);
  const auto n = static_cast<std::size_t>(std::floor(duration_s * output_rate_hz + 1e-9)) + 1;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SimResult r;
  r.init(output_rate_hz, n);
  PlantState s{{theta0, 0.0}, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    r.record(s, {});
    if (noise_sd > 0.0) r.theta.values.back() += noise_sd * noise(rng);
    if (i + 1 < n) {
      for (std::size_t k = 0; k < sub; ++k) s = step(plant, s, 0.0);
    }
  }
  return r;
}

/// Drives the plant with a zero-order-held pressure command sampled at the
/// trace rate, under a constant external tip force. Output sample i is the
/// state at t_i, before command i acts.
inline SimResult run_pressure_profile(const PlantConfig& plant, const Trace& pressure,
                                      const TipForce& f_ext = {}, PlantState initial = {}) {
  plant.validate();
  pressure.validate();
  const std::size_t sub = steps_per_sample(plant, pressure.sample_rate_hz);
  SimResult r;
  r.init(pressure.sample_rate_hz, pressure.size());
  PlantState s = initial;
  for (std::size_t i = 0; i < pressure.size(); ++i) {
    const TipForce contact = contact_force(plant, s, f_ext);
    r.record(s, {f_ext.fx_N + contact.fx_N, f_ext.fy_N + contact.fy_N});
    if (i + 1 < pressure.size()) {
      for (std::size_t k = 0; k < sub; ++k) s = step(plant, s, pressure.values[i], f_ext);
    }
  }
  return r;
}

/// Linear 0 -> p_max ramp at the given rate.
inline Trace pressure_ramp(double p_max, double duration_s, double rate_hz) {
  const auto n = static_cast<std::size_t>(std::floor(duration_s * rate_hz + 1e-9)) + 1;
  Trace t(rate_hz, std::vector<double>(n), Unit::pressure_Pa);
  for (std::size_t i = 0; i < n; ++i)
    t.values[i] = p_max * static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

}  // namespace prbm::sim
