#pragma once

// Closed-loop co-simulations: the controller runs at its loop rate with a
// zero-order hold on the pressure command while the plant integrates at dt_s.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "prbm/control.hpp"
#include "prbm/errors.hpp"
#include "prbm/model.hpp"
#include "prbm/sim.hpp"
#include "prbm/trace.hpp"

namespace prbm::scenario {

inline constexpr double kInstabilityAngleRad = 10.0;

struct TrackingRun {
  Trace reference;  // rad, at the loop rate
  Trace measured;   // rad
  Trace command;    // Pa
  Trace applied;    // Pa
};

/// Co-simulates a position controller (with or without feedforward) against
/// the plant. `model` is what the controller believes; `plant` is the truth.
inline TrackingRun run_tracking(const sim::PlantConfig& plant, const DynamicCoefficients& model,
                                const control::ControllerConfig& ctrl, const Trace& reference_rad,
                                double sensor_noise_sd = 0.0, std::uint64_t seed = 0) {
  plant.validate();
  ctrl.gains.validate();
  reference_rad.validate();
  if (std::abs(reference_rad.sample_rate_hz - ctrl.gains.loop_rate_hz) > 1e-9)
    throw ParameterError("reference rate must equal the controller loop rate");
  const std::size_t sub = sim::steps_per_sample(plant, ctrl.gains.loop_rate_hz);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double rate = ctrl.gains.loop_rate_hz;
  TrackingRun run{reference_rad, Trace(rate, {}, Unit::angle_rad), Trace(rate, {}, Unit::pressure_Pa),
                  Trace(rate, {}, Unit::pressure_Pa)};
  sim::PlantState s;
  control::PidState pid;
  for (std::size_t i = 0; i < reference_rad.size(); ++i) {
    double meas = s.finger.theta_rad;
    if (sensor_noise_sd > 0.0) meas += sensor_noise_sd * noise(rng);
    const auto out =
        control::position_controller_step(model, ctrl, reference_rad.values[i], meas, pid);
    pid = out.state;
    run.measured.values.push_back(meas);
    run.command.values.push_back(out.pressure_Pa);
    run.applied.values.push_back(s.pressure_Pa);
    for (std::size_t k = 0; k < sub; ++k) s = sim::step(plant, s, out.pressure_Pa);
    if (std::abs(s.finger.theta_rad) > kInstabilityAngleRad) {
      throw InstabilityError("closed loop unstable: |theta| exceeded " +
                             std::to_string(kInstabilityAngleRad) + " rad at t = " +
                             std::to_string(reference_rad.time(i + 1)) + " s");
    }
  }
  return run;
}

struct ForceRun {
  Trace force;           // true contact reaction along the controller's axis, N
  Trace force_estimate;  // controller's estimate along the same axis, N
  Trace theta;           // rad
  Trace command;         // Pa
  double steady_state_force_N = 0.0;
  double settling_time_s = 0.0;  // first time after which |F - f_ref| stays within the band
  bool settled = false;
  bool saturation_limited = false;
  double max_force_N = 0.0;  // actuator ceiling at the contact angle
};

struct ForceScenario {
  double contact_angle_rad = kPi / 2.0;
  double force_ref_N = 1.0;
  double duration_s = 3.0;
  double settle_band = 0.02;  // relative; absolute 0.02 * 1 N when f_ref is 0
  /// Fraction of the run (from the end) averaged for the steady-state force.
  double steady_window_fraction = 0.1;
};

/// Finger starts at rest, closes onto a rigid stop at the contact angle and
/// regulates the contact force with the estimator in the loop.
inline ForceRun run_force_contact(sim::PlantConfig plant, const DynamicCoefficients& model,
                                  const control::ForceControllerConfig& ctrl,
                                  const ForceScenario& sc) {
  if (!(sc.contact_angle_rad >= 0.0 && sc.contact_angle_rad <= kPi))
    throw ParameterError("contact angle must lie in [0, pi]");
  plant.upper_stop_rad = sc.contact_angle_rad;
  plant.validate();
  ctrl.base.gains.validate();
  const double rate = ctrl.base.gains.loop_rate_hz;
  const std::size_t sub = sim::steps_per_sample(plant, rate);
  const auto n = static_cast<std::size_t>(std::llround(sc.duration_s * rate));
  if (n < 2) throw ParameterError("force scenario shorter than 2 samples");

  ForceRun run;
  run.force = Trace(rate, {}, Unit::force_N);
  run.force_estimate = Trace(rate, {}, Unit::force_N);
  run.theta = Trace(rate, {}, Unit::angle_rad);
  run.command = Trace(rate, {}, Unit::pressure_Pa);
  run.max_force_N =
      control::max_contact_force(model, plant.geometry, sc.contact_angle_rad, ctrl.base.limits);
  run.saturation_limited = sc.force_ref_N > run.max_force_N;

  sim::PlantState s;
  control::PidState pid;
  double p_prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double meas = s.finger.theta_rad;
    const auto out = control::force_controller_step(model, plant.geometry, ctrl, sc.force_ref_N,
                                                    p_prev, meas, pid);
    pid = out.state;
    const TipForce axis = control::contact_axis(ctrl, plant.geometry, meas);
    const TipForce f = sim::contact_force(plant, s);
    run.force.values.push_back(f.fx_N * axis.fx_N + f.fy_N * axis.fy_N);
    run.force_estimate.values.push_back(out.force_estimate_N);
    run.theta.values.push_back(meas);
    run.command.values.push_back(out.pressure_Pa);
    p_prev = out.pressure_Pa;
    for (std::size_t k = 0; k < sub; ++k) s = sim::step(plant, s, out.pressure_Pa);
    if (std::abs(s.finger.theta_rad) > kInstabilityAngleRad)
      throw InstabilityError("force loop unstable: |theta| exceeded limit");
  }

  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(sc.steady_window_fraction * n));
  double sum = 0.0;
  for (std::size_t i = n - w; i < n; ++i) sum += run.force.values[i];
  run.steady_state_force_N = sum / static_cast<double>(w);
  // Also flag a loop that ends pinned at the pressure ceiling (model mismatch).
  bool pinned = true;
  for (std::size_t i = n - w; i < n; ++i) pinned = pinned && run.command.values[i] >= ctrl.base.limits.max_Pa;
  run.saturation_limited = run.saturation_limited || pinned;

  const double band = sc.settle_band * (sc.force_ref_N > 0.0 ? sc.force_ref_N : 1.0);
  std::size_t last_out = n;  // index of the last sample outside the band
  for (std::size_t i = n; i-- > 0;) {
    if (std::abs(run.force.values[i] - sc.force_ref_N) > band) {
      last_out = i;
      break;
    }
  }
  if (last_out == n) {
    run.settled = true;
    run.settling_time_s = 0.0;
  } else if (last_out + 1 < n) {
    run.settled = true;
    run.settling_time_s = run.force.time(last_out + 1);
  }
  return run;
}

struct StaticPinch {
  double holding_pressure_Pa = 0.0;
  double true_force_N = 0.0;       // simulator reaction along J
  double estimated_force_N = 0.0;  // estimate_force along J
  double theta_rad = 0.0;
};

/// Holds the finger against a rigid stop with the constant pressure that the
/// quasi-static model predicts for `force_N`, waits for equilibrium and
/// compares the stop's reaction with the estimator's output.
inline StaticPinch run_static_pinch(sim::PlantConfig plant, double contact_angle_rad,
                                    double force_N, double settle_time_s = 2.0) {
  plant.upper_stop_rad = contact_angle_rad;
  plant.validate();
  const auto& c = plant.coefficients;
  const TipForce axis = contact_normal(plant.geometry, contact_angle_rad);
  const double p = pressure_for_force(c, plant.geometry, contact_angle_rad,
                                      {force_N * axis.fx_N, force_N * axis.fy_N});
  const auto steps = static_cast<std::size_t>(std::llround(settle_time_s / plant.dt_s));
  sim::PlantState s;
  for (std::size_t i = 0; i < steps; ++i) s = sim::step(plant, s, p);

  StaticPinch out;
  out.holding_pressure_Pa = s.pressure_Pa;
  out.theta_rad = s.finger.theta_rad;
  const TipForce f = sim::contact_force(plant, s);
  out.true_force_N = f.fx_N * axis.fx_N + f.fy_N * axis.fy_N;
  const TipForce est = estimate_force(c, plant.geometry, s.pressure_Pa, s.finger.theta_rad);
  out.estimated_force_N = est.fx_N * axis.fx_N + est.fy_N * axis.fy_N;
  return out;
}

}  // namespace prbm::scenario
