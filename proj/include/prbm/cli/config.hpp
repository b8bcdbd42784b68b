#pragma once

// JSON experiment and finger configuration.
//
// An experiment file lists finger files by path (relative to the experiment
// file) and carries the scenario, plant and controller settings shared by all
// fingers. A finger file may override any plant field in its own "plant" block.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "prbm/control.hpp"
#include "prbm/errors.hpp"
#include "prbm/io.hpp"
#include "prbm/model.hpp"
#include "prbm/signal.hpp"
#include "prbm/sim.hpp"

namespace prbm::cli {

using nlohmann::json;

inline const std::vector<std::string>& finger_names() {
  static const std::vector<std::string> names{"thumb", "index", "middle", "ring", "little"};
  return names;
}

struct FingerConfig {
  std::string name;
  std::string path;
  FingerGeometry geometry;
  double stiffness_k = 0.0;
  double damping_b = 0.0;
  json plant_overrides = json::object();
  json raw;

  DynamicCoefficients coefficients() const {
    return make_coefficients(geometry, stiffness_k, damping_b);
  }
};

struct FreeDecaySettings {
  double theta0_deg = 30.0;
  double duration_s = 8.0;
  double noise_sd_deg = 0.5;
  double sample_rate_hz = 100.0;
};

struct EstimateSettings {
  std::size_t trials = 10;
  FreeDecaySettings synth;
  signal::LdmOptions ldm;
};

struct RampSettings {
  double duration_s = 60.0;
  double pressure_max_Pa = 200e3;
  double sample_rate_hz = 100.0;
  double transient_fraction = 0.05;
};

struct ContactSettings {
  double contact_angle_deg = 90.0;
  double force_N = 1.0;
  double duration_s = 3.0;
};

struct TrackSettings {
  double sensor_noise_sd_deg = 0.0;
  double skip_periods = 1.0;
};

struct ExperimentConfig {
  std::string path;
  std::vector<FingerConfig> fingers;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  json plant = json::object();
  EstimateSettings estimate;
  FreeDecaySettings free_decay;
  RampSettings ramp;
  ContactSettings hold_force;
  control::PidGains position_gains;
  control::PidGains force_gains;
  sim::PressureLimits limits;
  control::ReferenceSpec reference;  // angles in radians
  TrackSettings track;
  ContactSettings force;
  json raw;
};

namespace detail {

template <typename T>
T get(const json& j, const char* key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return get<T>(j, key, T{}, where);
}

inline json parse_file(const std::string& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline control::PidGains parse_gains(const json& j, const std::string& where) {
  control::PidGains g;
  g.kp = get(j, "kp", 0.0, where);
  g.ki = get(j, "ki", 0.0, where);
  g.kd = get(j, "kd", 0.0, where);
  g.integral_limit = get(j, "integral_limit", 50e3, where);
  g.derivative_filter_hz = get(j, "derivative_filter_hz", 1000.0, where);
  g.loop_rate_hz = get(j, "loop_rate_hz", 100.0, where);
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(where + "." + e.what());
  }
  return g;
}

inline ContactSettings parse_contact(const json& j, const std::string& where) {
  ContactSettings c;
  c.contact_angle_deg = get(j, "contact_angle_deg", c.contact_angle_deg, where);
  c.force_N = get(j, "force_N", c.force_N, where);
  c.duration_s = get(j, "duration_s", c.duration_s, where);
  return c;
}

inline FreeDecaySettings parse_free_decay(const json& j, const std::string& where) {
  FreeDecaySettings f;
  f.theta0_deg = get(j, "theta0_deg", f.theta0_deg, where);
  f.duration_s = get(j, "duration_s", f.duration_s, where);
  f.noise_sd_deg = get(j, "noise_sd_deg", f.noise_sd_deg, where);
  f.sample_rate_hz = get(j, "sample_rate_hz", f.sample_rate_hz, where);
  return f;
}

}  // namespace detail

inline FingerConfig load_finger(const std::string& path) {
  const json j = detail::parse_file(path);
  FingerConfig f;
  f.path = path;
  f.raw = j;
  f.name = detail::require<std::string>(j, "name", path);
  const std::string gw = path + ":geometry";
  if (!j.contains("geometry")) throw ConfigError(path + ": missing 'geometry' block");
  const json& g = j.at("geometry");
  f.geometry.mass_kg = detail::require<double>(g, "mass_kg", gw);
  f.geometry.length_m = detail::require<double>(g, "length_m", gw);
  f.geometry.gamma = detail::get(g, "gamma", 0.85, gw);
  f.geometry.width_e_m = detail::require<double>(g, "width_e_m", gw);
  f.geometry.wall_a_m = detail::require<double>(g, "wall_a_m", gw);
  f.geometry.chamber_b_m = detail::require<double>(g, "chamber_b_m", gw);
  f.geometry.arm_larm_m = detail::require<double>(g, "arm_larm_m", gw);
  if (!j.contains("coefficients")) throw ConfigError(path + ": missing 'coefficients' block");
  const std::string cw = path + ":coefficients";
  f.stiffness_k = detail::require<double>(j.at("coefficients"), "stiffness_k", cw);
  f.damping_b = detail::require<double>(j.at("coefficients"), "damping_b", cw);
  if (j.contains("plant")) f.plant_overrides = j.at("plant");
  try {
    (void)f.coefficients();
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return f;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  const json j = detail::parse_file(path);
  ExperimentConfig c;
  c.path = path;
  c.raw = j;
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  const auto files = detail::require<std::vector<std::string>>(j, "fingers", path);
  if (files.empty()) throw ConfigError(path + ": at least one finger is required");
  std::set<std::string> seen;
  for (const auto& f : files) {
    const std::filesystem::path p = std::filesystem::path(f).is_absolute() ? std::filesystem::path(f) : base / f;
    FingerConfig fc = load_finger(p.string());
    if (!seen.insert(fc.name).second) throw ConfigError(path + ": duplicate finger '" + fc.name + "'");
    c.fingers.push_back(std::move(fc));
  }
  if (c.fingers.size() > 5) throw ConfigError(path + ": at most five fingers");

  c.seed = detail::get<std::uint64_t>(j, "seed", 0, path);
  c.output_dir = detail::get<std::string>(j, "output_dir", "out", path);
  c.plant = j.value("plant", json::object());
  c.limits.min_Pa = detail::get(c.plant, "pressure_min_Pa", 0.0, "plant");
  c.limits.max_Pa = detail::get(c.plant, "pressure_max_Pa", 200e3, "plant");

  const json est = j.value("estimate", json::object());
  c.estimate.trials = detail::get<std::size_t>(est, "trials", 10, "estimate");
  c.estimate.synth = detail::parse_free_decay(est, "estimate");
  const json filt = est.value("filter", json::object());
  c.estimate.ldm.filter = detail::get(filt, "enabled", true, "estimate.filter");
  c.estimate.ldm.cutoff_hz = detail::get(filt, "cutoff_hz", 10.0, "estimate.filter");
  c.estimate.ldm.filter_order = detail::get(filt, "order", 2, "estimate.filter");
  c.estimate.ldm.settle_fraction = detail::get(est, "settle_fraction", 0.1, "estimate");
  c.estimate.ldm.prominence_fraction = detail::get(est, "prominence_fraction", 0.02, "estimate");
  c.estimate.ldm.min_amplitude_fraction =
      detail::get(est, "min_amplitude_fraction", 0.1, "estimate");
  c.estimate.ldm.noise_floor_factor = detail::get(est, "noise_floor_factor", 4.0, "estimate");

  const json simj = j.value("simulate", json::object());
  c.free_decay = detail::parse_free_decay(simj.value("free_decay", json::object()), "simulate.free_decay");
  const json ramp = simj.value("ramp", json::object());
  c.ramp.duration_s = detail::get(ramp, "duration_s", 60.0, "simulate.ramp");
  c.ramp.pressure_max_Pa = detail::get(ramp, "pressure_max_Pa", 200e3, "simulate.ramp");
  c.ramp.sample_rate_hz = detail::get(ramp, "sample_rate_hz", 100.0, "simulate.ramp");
  c.ramp.transient_fraction = detail::get(ramp, "transient_fraction", 0.05, "simulate.ramp");
  c.hold_force = detail::parse_contact(simj.value("hold_force", json::object()), "simulate.hold_force");

  c.position_gains =
      detail::parse_gains(j.value("position_controller", json::object()), "position_controller");
  c.force_gains = detail::parse_gains(j.value("force_controller", json::object()), "force_controller");

  const json ref = j.value("reference", json::object());
  const std::string kind = detail::get<std::string>(ref, "kind", "sine", "reference");
  if (kind == "sine") c.reference.kind = control::ReferenceKind::sine;
  else if (kind == "step") c.reference.kind = control::ReferenceKind::step;
  else if (kind == "hold") c.reference.kind = control::ReferenceKind::hold;
  else throw ConfigError("reference.kind: expected sine, step or hold");
  c.reference.amplitude = deg_to_rad(detail::get(ref, "amplitude_deg", 45.0, "reference"));
  c.reference.offset = deg_to_rad(detail::get(ref, "offset_deg", 45.0, "reference"));
  c.reference.period_s = detail::get(ref, "period_s", 0.75, "reference");
  c.reference.duration_s = detail::get(ref, "duration_s", 3.75, "reference");
  try {
    c.reference.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("reference.") + e.what());
  }

  const json tr = j.value("track", json::object());
  c.track.sensor_noise_sd_deg = detail::get(tr, "sensor_noise_sd_deg", 0.0, "track");
  c.track.skip_periods = detail::get(tr, "skip_periods", 1.0, "track");
  c.force = detail::parse_contact(j.value("force", json::object()), "force");
  return c;
}

/// Plant for one finger: experiment-wide plant block, then the finger's overrides.
inline sim::PlantConfig make_plant(const ExperimentConfig& exp, const FingerConfig& f) {
  json p = exp.plant;
  for (const auto& [k, v] : f.plant_overrides.items()) p[k] = v;
  sim::PlantConfig plant;
  plant.geometry = f.geometry;
  plant.coefficients = f.coefficients();
  plant.dt_s = detail::get(p, "dt_s", 1e-3, "plant");
  plant.pressure_limits.min_Pa = detail::get(p, "pressure_min_Pa", 0.0, "plant");
  plant.pressure_limits.max_Pa = detail::get(p, "pressure_max_Pa", 200e3, "plant");
  plant.actuator_bandwidth_hz = detail::get(p, "actuator_bandwidth_hz", 10.0, "plant");
  try {
    plant.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(f.name + " plant: " + e.what());
  }
  return plant;
}

}  // namespace prbm::cli
