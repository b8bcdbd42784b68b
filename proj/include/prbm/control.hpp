#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "prbm/errors.hpp"
#include "prbm/model.hpp"
#include "prbm/sim.hpp"
#include "prbm/trace.hpp"

namespace prbm::control {

// ---------------------------------------------------------------------------
// PID
// ---------------------------------------------------------------------------

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  /// Bound on |integral term| in output units.
  double integral_limit = std::numeric_limits<double>::infinity();
  /// Corner of the first-order derivative filter; infinity disables filtering.
  double derivative_filter_hz = std::numeric_limits<double>::infinity();
  double loop_rate_hz = 100.0;

  void validate() const {
    if (!(std::isfinite(loop_rate_hz) && loop_rate_hz > 0.0))
      throw ValidationError("loop_rate_hz", "must be finite and > 0");
    if (!std::isfinite(kp)) throw ValidationError("kp", "must be finite");
    if (!std::isfinite(ki)) throw ValidationError("ki", "must be finite");
    if (!std::isfinite(kd)) throw ValidationError("kd", "must be finite");
    if (!(integral_limit > 0.0)) throw ValidationError("integral_limit", "must be > 0");
    if (!(derivative_filter_hz > 0.0))
      throw ValidationError("derivative_filter_hz", "must be > 0");
  }
};

struct PidState {
  double integral = 0.0;    // integral term, already multiplied by ki
  double derivative = 0.0;  // filtered de/dt
  double prev_error = 0.0;
  bool primed = false;
};

struct PidOutput {
  double output = 0.0;
  PidState state;
};

/// Positional PID: trapezoidal integral clamped to +-integral_limit, and a
/// backward-difference derivative passed through a first-order low-pass.
/// The first call seeds the previous error with the current one, so there is
/// no derivative kick.
inline PidOutput pid_step(const PidGains& g, double error, PidState s) {
  const double dt = 1.0 / g.loop_rate_hz;
  const double prev = s.primed ? s.prev_error : error;

  s.integral += g.ki * dt * 0.5 * (error + prev);
  s.integral = std::clamp(s.integral, -g.integral_limit, g.integral_limit);

  const double raw = (error - prev) / dt;
  if (std::isinf(g.derivative_filter_hz)) {
    s.derivative = raw;
  } else {
    const double tau = 1.0 / (2.0 * kPi * g.derivative_filter_hz);
    s.derivative += dt / (dt + tau) * (raw - s.derivative);
  }
  s.prev_error = error;
  s.primed = true;
  return {g.kp * error + s.integral + g.kd * s.derivative, s};
}

// ---------------------------------------------------------------------------
// Position and force controllers
// ---------------------------------------------------------------------------

struct ControllerConfig {
  PidGains gains;
  sim::PressureLimits limits;
  bool feedforward = true;  // false gives the bare PID loop
};

struct ControllerOutput {
  double pressure_Pa = 0.0;
  PidState state;
};

/// Static-map feedforward k theta_ref / N plus PID on the angle error, clamped.
inline ControllerOutput position_controller_step(const DynamicCoefficients& coef,
                                                 const ControllerConfig& cfg, double theta_ref,
                                                 double theta_meas, const PidState& state) {
  const auto pid = pid_step(cfg.gains, theta_ref - theta_meas, state);
  const double ff = cfg.feedforward ? pressure_for_angle(coef, theta_ref) : 0.0;
  return {cfg.limits.clamp(ff + pid.output), pid.state};
}

struct ForceControllerConfig {
  ControllerConfig base;
  /// Fixed unit contact axis; when empty the axis follows J(theta_meas).
  std::optional<TipForce> contact_axis;
};

inline TipForce contact_axis(const ForceControllerConfig& cfg, const FingerGeometry& geom,
                             double theta) {
  return cfg.contact_axis ? *cfg.contact_axis : contact_normal(geom, theta);
}

struct ForceControllerOutput {
  double pressure_Pa = 0.0;
  double force_estimate_N = 0.0;  // along the contact axis
  PidState state;
};

/// Static-balance feedforward (k theta + J.f) / N for the reference force
/// along the contact axis, plus PID on the gap between that reference and the
/// force estimated from the previous pressure command and the measured angle.
inline ForceControllerOutput force_controller_step(const DynamicCoefficients& coef,
                                                   const FingerGeometry& geom,
                                                   const ForceControllerConfig& cfg,
                                                   double f_ref, double p_prev,
                                                   double theta_meas, const PidState& state) {
  const TipForce axis = contact_axis(cfg, geom, theta_meas);
  const TipForce est = estimate_force(coef, geom, p_prev, theta_meas);
  const double est_axis = est.fx_N * axis.fx_N + est.fy_N * axis.fy_N;
  const auto pid = pid_step(cfg.base.gains, f_ref - est_axis, state);
  const double ff = cfg.base.feedforward
                        ? pressure_for_force(coef, geom, theta_meas,
                                             {f_ref * axis.fx_N, f_ref * axis.fy_N})
                        : 0.0;
  return {cfg.base.limits.clamp(ff + pid.output), est_axis, pid.state};
}

/// Largest force along the J-aligned contact axis the actuator can hold at theta.
inline double max_contact_force(const DynamicCoefficients& coef, const FingerGeometry& geom,
                                double theta, const sim::PressureLimits& limits) {
  const double h = geom.half_link();
  return (coef.moment_N * limits.max_Pa - coef.stiffness_k * theta) / h;
}

// ---------------------------------------------------------------------------
// References and tracking metrics
// ---------------------------------------------------------------------------

enum class ReferenceKind { sine, step, hold };

/// sine: offset + amplitude sin(2 pi t / period)
/// step: offset at t = 0, offset + amplitude afterwards
/// hold: offset throughout
struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::sine;
  double amplitude = 0.0;
  double offset = 0.0;
  double period_s = 1.0;
  double duration_s = 1.0;

  void validate() const {
    if (kind == ReferenceKind::sine && !(period_s > 0.0))
      throw ValidationError("period_s", "must be > 0 for a sine reference");
    if (!(duration_s > 0.0)) throw ValidationError("duration_s", "must be > 0");
    if (!std::isfinite(amplitude) || !std::isfinite(offset))
      throw ValidationError("amplitude", "amplitude and offset must be finite");
  }
};

/// Samples the reference at round(duration * rate) points from t = 0.
inline Trace generate_reference(const ReferenceSpec& spec, double sample_rate_hz,
                                Unit unit = Unit::angle_rad) {
  spec.validate();
  if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * sample_rate_hz));
  if (n < 2) throw ParameterError("reference shorter than 2 samples");
  Trace t(sample_rate_hz, std::vector<double>(n), unit);
  for (std::size_t i = 0; i < n; ++i) {
    const double time = t.time(i);
    switch (spec.kind) {
      case ReferenceKind::sine:
        t.values[i] = spec.offset + spec.amplitude * std::sin(2.0 * kPi * time / spec.period_s);
        break;
      case ReferenceKind::step:
        t.values[i] = i == 0 ? spec.offset : spec.offset + spec.amplitude;
        break;
      case ReferenceKind::hold:
        t.values[i] = spec.offset;
        break;
    }
  }
  return t;
}

struct TrackingReport {
  double rmse = 0.0;
  double max_error = 0.0;
  std::vector<double> errors;  // reference - measured, per sample after the skip window
  std::size_t skipped = 0;
};

inline TrackingReport evaluate_tracking(const Trace& reference, const Trace& measured,
                                        std::size_t skip_samples = 0) {
  if (reference.size() != measured.size())
    throw ParameterError("reference and measured traces differ in length");
  if (skip_samples >= reference.size())
    throw ParameterError("skip window covers the whole trace");
  TrackingReport r;
  r.skipped = skip_samples;
  double ss = 0.0;
  for (std::size_t i = skip_samples; i < reference.size(); ++i) {
    const double e = reference.values[i] - measured.values[i];
    r.errors.push_back(e);
    ss += e * e;
    r.max_error = std::max(r.max_error, std::abs(e));
  }
  // min() keeps rmse <= max_error when rounding pushes the mean square up.
  r.rmse = std::min(std::sqrt(ss / static_cast<double>(r.errors.size())), r.max_error);
  return r;
}

}  // namespace prbm::control
