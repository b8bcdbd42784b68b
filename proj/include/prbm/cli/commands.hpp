#pragma once

// Implementation of the prbm-ldm subcommands. Each command writes
// report.json (machine-readable) and report.txt (table) under
// <out>/<command>/ plus per-finger artifacts, and returns a process exit code.
// Nothing time- or host-dependent is written, so a fixed (config, seed)
// reproduces every file byte for byte.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prbm/cli/config.hpp"
#include "prbm/control.hpp"
#include "prbm/errors.hpp"
#include "prbm/io.hpp"
#include "prbm/model.hpp"
#include "prbm/scenario.hpp"
#include "prbm/signal.hpp"
#include "prbm/sim.hpp"

namespace prbm::cli {

inline constexpr const char* kToolName = "prbm-ldm";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kOutputEnvVar = "PRBM_LDM_OUT";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitFile = 3,
  kExitEstimation = 4,
  kExitInstability = 5,
};

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> fingers;  // empty selects every finger in the config
};

struct CommandResult {
  int exit_code = kExitOk;
  json report;
  std::filesystem::path dir;
};

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per (run seed, finger, trial).
inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t finger, std::size_t trial) {
  return splitmix64(splitmix64(seed ^ (0x100000001b3ULL * (finger + 1))) + trial);
}

inline std::filesystem::path output_root(const CommonOptions& opt, const ExperimentConfig* exp) {
  if (opt.out) return *opt.out;
  if (const char* env = std::getenv(kOutputEnvVar); env && *env) return env;
  return exp ? exp->output_dir : std::string("out");
}

inline std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError(dir.string(), "cannot create directory: " + ec.message());
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError(path.string(), "cannot open for writing");
  os << text;
  if (!os) throw FileError(path.string(), "write failed");
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Plain-text table with left-aligned columns.
inline std::string table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < r.size() ? r[c] : "";
      os << cell;
      if (c + 1 < width.size()) os << std::string(width[c] - cell.size(), ' ') << " | ";
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 3 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

inline std::vector<const FingerConfig*> select_fingers(const ExperimentConfig& exp,
                                                       const std::vector<std::string>& names) {
  std::vector<const FingerConfig*> out;
  if (names.empty()) {
    for (const auto& f : exp.fingers) out.push_back(&f);
    return out;
  }
  for (const auto& n : names) {
    const FingerConfig* hit = nullptr;
    for (const auto& f : exp.fingers)
      if (f.name == n) hit = &f;
    if (!hit) throw ConfigError("finger '" + n + "' is not in " + exp.path);
    out.push_back(hit);
  }
  return out;
}

inline json base_report(const std::string& command, const ExperimentConfig& exp,
                        std::uint64_t seed) {
  json r;
  r["tool"] = kToolName;
  r["version"] = kToolVersion;
  r["command"] = command;
  r["seed"] = seed;
  r["config"] = exp.raw;
  json fingers = json::object();
  json inputs = json::object();
  inputs[exp.path] = io::file_checksum(exp.path);
  for (const auto& f : exp.fingers) {
    fingers[f.name] = f.raw;
    inputs[f.path] = io::file_checksum(f.path);
  }
  r["finger_configs"] = fingers;
  r["inputs"] = inputs;
  return r;
}

inline void finish(CommandResult& res, const std::string& text) {
  prepare_dir(res.dir);
  write_text(res.dir / "report.json", res.report.dump(2) + "\n");
  write_text(res.dir / "report.txt", text);
}

/// Runs `fn(i)` for every selected finger concurrently; results keep input order.
template <typename Fn>
auto for_each_finger(std::size_t n, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::future<R>> jobs;
  jobs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) jobs.push_back(std::async(std::launch::async, fn, i));
  std::vector<R> out;
  out.reserve(n);
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

/// Halves dt until the plant's step-size guard holds (used for perturbed plants).
inline void fit_step(sim::PlantConfig& plant) {
  const double wn = plant.coefficients.natural_frequency();
  while (plant.dt_s > 1.0 / (20.0 * wn)) plant.dt_s *= 0.5;
}

inline json channel_files(const std::filesystem::path& dir, const sim::SimResult& r) {
  const std::pair<const char*, const Trace*> channels[] = {
      {"theta_rad.csv", &r.theta},
      {"theta_dot_rad_s.csv", &r.theta_dot},
      {"pressure_Pa.csv", &r.pressure_applied},
      {"force_x_N.csv", &r.force_x},
      {"force_y_N.csv", &r.force_y},
  };
  json files = json::object();
  for (const auto& [name, trace] : channels) {
    std::ostringstream os;
    io::write_trace_csv(os, *trace);
    write_text(dir / name, os.str());
    files[name] = io::hex64(io::fnv1a64(os.str()));
  }
  return files;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateOptions {
  bool synthetic = false;
  std::optional<std::size_t> trials;
  std::vector<std::string> traces;
};

inline CommandResult cmd_estimate(const CommonOptions& opt, const EstimateOptions& eo) {
  const ExperimentConfig exp = load_experiment(opt.config);
  const std::uint64_t seed = opt.seed.value_or(exp.seed);
  const auto fingers = detail::select_fingers(exp, opt.fingers);
  CommandResult res;
  res.dir = detail::output_root(opt, &exp) / "estimate";
  res.report = detail::base_report("estimate", exp, seed);

  const bool from_files = !eo.traces.empty();
  if (from_files == eo.synthetic)
    throw ConfigError("estimate needs either --synthetic or at least one --trace file");
  if (from_files && fingers.size() != 1)
    throw ConfigError("trace files belong to one finger; select it with --finger");

  std::vector<Trace> loaded;
  if (from_files) {
    for (const auto& path : eo.traces) {
      Trace t = io::read_trace_csv(path);
      if (t.unit != Unit::angle_rad && t.unit != Unit::angle_deg)
        throw FileError(path, "expected an angle trace (angle_rad or angle_deg)", 1);
      loaded.push_back(to_unit(std::move(t), Unit::angle_rad));
      res.report["inputs"][path] = io::file_checksum(path);
    }
  }
  const std::size_t trials = from_files ? loaded.size() : eo.trials.value_or(exp.estimate.trials);
  if (trials == 0) throw ConfigError("trial count must be >= 1");

  struct Row {
    json j;
    bool any_ok = false;
  };
  const auto rows = detail::for_each_finger(fingers.size(), [&](std::size_t fi) {
    const FingerConfig& f = *fingers[fi];
    const sim::PlantConfig plant = make_plant(exp, f);
    const double inertia = plant.coefficients.inertia_A;
    std::vector<signal::LdmEstimate> ok;
    json errors = json::array();
    json per_trial = json::array();
    for (std::size_t t = 0; t < trials; ++t) {
      try {
        Trace theta;
        if (from_files) {
          theta = loaded[t];
        } else {
          const auto& s = exp.estimate.synth;
          theta = sim::run_free_decay(plant, deg_to_rad(s.theta0_deg), s.duration_s,
                                      deg_to_rad(s.noise_sd_deg), detail::derive_seed(seed, fi, t),
                                      s.sample_rate_hz)
                      .theta;
        }
        const auto e = signal::estimate_free_decay(theta, inertia, exp.estimate.ldm);
        ok.push_back(e);
        per_trial.push_back({{"trial", t},
                             {"delta", e.delta},
                             {"zeta", e.zeta},
                             {"omega_d_rad_s", e.omega_d_rad_s},
                             {"omega_n_rad_s", e.omega_n_rad_s},
                             {"stiffness_k", e.stiffness_k},
                             {"damping_b", e.damping_b},
                             {"peaks_used", e.n_peaks_used}});
      } catch (const EstimationError& e) {
        errors.push_back({{"trial", t}, {"error", e.what()}});
      }
    }
    Row row;
    row.j["finger"] = f.name;
    row.j["inertia_A"] = inertia;
    row.j["moment_N"] = plant.coefficients.moment_N;
    row.j["config_stiffness_k"] = f.stiffness_k;
    row.j["config_damping_b"] = f.damping_b;
    row.j["trials_ok"] = ok.size();
    row.j["trials_failed"] = errors.size();
    row.j["errors"] = errors;
    row.j["trials"] = per_trial;
    if (!ok.empty()) {
      const auto agg = signal::aggregate_trials(ok);
      row.any_ok = true;
      row.j["stiffness_k"] = agg.mean.stiffness_k;
      row.j["stiffness_k_sd"] = agg.stddev.stiffness_k;
      row.j["damping_b"] = agg.mean.damping_b;
      row.j["damping_b_sd"] = agg.stddev.damping_b;
      row.j["zeta"] = agg.mean.zeta;
      row.j["omega_n_rad_s"] = agg.mean.omega_n_rad_s;
      row.j["stiffness_rel_error"] = agg.mean.stiffness_k / f.stiffness_k - 1.0;
      row.j["damping_rel_error"] = agg.mean.damping_b / f.damping_b - 1.0;
    }
    return row;
  });

  json results = json::array();
  std::vector<std::vector<std::string>> table;
  const std::string trials_total = std::to_string(trials);
  for (const auto& r : rows) {
    results.push_back(r.j);
    const std::string name = r.j["finger"].get<std::string>();
    const std::string ok = std::to_string(r.j["trials_ok"].get<std::size_t>()) + "/" + trials_total;
    if (!r.any_ok) {
      res.exit_code = kExitEstimation;
      table.push_back({name, "-", "-", "-", "-", "-", ok});
      continue;
    }
    const double k = r.j["stiffness_k"].get<double>(), b = r.j["damping_b"].get<double>();
    table.push_back({name, detail::fmt("%.4g", k), detail::fmt("%.3g", b),
                     detail::fmt("%.4f", k) + " / " + detail::fmt("%.4f", b),
                     detail::fmt("%.2g", r.j["stiffness_k_sd"].get<double>()),
                     detail::fmt("%.2g", r.j["damping_b_sd"].get<double>()), ok});
  }
  res.report["mode"] = from_files ? "traces" : "synthetic";
  res.report["results"] = results;
  detail::finish(res, "Average estimated stiffness and damping coefficients\n\n" +
                          detail::table({"Name", "Stiffness k_est (Nm/rad)", "Damping d_est (Nm.s/rad)",
                                         "k / d", "sd k", "sd d", "Trials"},
                                        table));
  return res;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

enum class SimScenario { free_decay, ramp, hold_force };

inline CommandResult cmd_simulate(const CommonOptions& opt, SimScenario scenario) {
  const ExperimentConfig exp = load_experiment(opt.config);
  const std::uint64_t seed = opt.seed.value_or(exp.seed);
  const auto fingers = detail::select_fingers(exp, opt.fingers);
  const char* name = scenario == SimScenario::free_decay ? "free-decay"
                     : scenario == SimScenario::ramp     ? "ramp"
                                                         : "hold-force";
  CommandResult res;
  res.dir = detail::output_root(opt, &exp) / "simulate" / name;
  res.report = detail::base_report("simulate", exp, seed);
  res.report["scenario"] = name;

  const auto rows = detail::for_each_finger(fingers.size(), [&](std::size_t fi) {
    const FingerConfig& f = *fingers[fi];
    sim::PlantConfig plant = make_plant(exp, f);
    const auto& c = plant.coefficients;
    const auto dir = detail::prepare_dir(res.dir / f.name);
    json row{{"finger", f.name}};
    sim::SimResult r;
    std::vector<std::string> cells{f.name};

    if (scenario == SimScenario::free_decay) {
      const auto& s = exp.free_decay;
      r = sim::run_free_decay(plant, deg_to_rad(s.theta0_deg), s.duration_s,
                              deg_to_rad(s.noise_sd_deg), detail::derive_seed(seed, fi, 0),
                              s.sample_rate_hz);
      row["theta0_deg"] = s.theta0_deg;
      row["samples"] = r.theta.size();
      cells.push_back(detail::fmt("%.1f", s.theta0_deg));
      cells.push_back(std::to_string(r.theta.size()));
    } else if (scenario == SimScenario::ramp) {
      const auto& s = exp.ramp;
      const Trace p = sim::pressure_ramp(s.pressure_max_Pa, s.duration_s, s.sample_rate_hz);
      r = sim::run_pressure_profile(plant, p);
      const std::size_t start = static_cast<std::size_t>(s.transient_fraction * p.size());
      double worst = 0.0;
      for (std::size_t i = std::max<std::size_t>(start, 1); i < p.size(); ++i) {
        const double model = c.moment_N * p.values[i] / c.stiffness_k;
        worst = std::max(worst, std::abs(r.theta.values[i] / model - 1.0));
      }
      const double final_model = rad_to_deg(c.moment_N * p.values.back() / c.stiffness_k);
      const double final_sim = rad_to_deg(r.theta.values.back());
      row["theta_final_deg"] = final_sim;
      row["theta_static_map_deg"] = final_model;
      row["final_rel_error"] = final_sim / final_model - 1.0;
      row["max_rel_error_after_transient"] = worst;
      cells.push_back(detail::fmt("%.2f", final_sim));
      cells.push_back(detail::fmt("%.2f", final_model));
      cells.push_back(detail::fmt("%.4f", 100.0 * worst));
    } else {
      const auto& s = exp.hold_force;
      const double th = deg_to_rad(s.contact_angle_deg);
      if (!(th >= 0.0 && th <= kPi)) throw ConfigError("contact angle must lie in [0, 180] deg");
      plant.upper_stop_rad = th;
      const TipForce axis = contact_normal(plant.geometry, th);
      const double p_hold = pressure_for_force(c, plant.geometry, th,
                                               {s.force_N * axis.fx_N, s.force_N * axis.fy_N});
      const auto n = static_cast<std::size_t>(std::llround(s.duration_s * 100.0)) + 1;
      r = sim::run_pressure_profile(plant, Trace(100.0, std::vector<double>(n, p_hold), Unit::pressure_Pa));
      const double fx = r.force_x.values.back(), fy = r.force_y.values.back();
      const double sim_force = fx * axis.fx_N + fy * axis.fy_N;
      const double p_end = r.pressure_applied.values.back();
      const double inverted = (c.moment_N * p_end - c.stiffness_k * th) / plant.geometry.half_link();
      row["contact_angle_deg"] = s.contact_angle_deg;
      row["target_force_N"] = s.force_N;
      row["holding_pressure_Pa"] = p_hold;
      row["equilibrium_force_N"] = sim_force;
      row["model_force_N"] = inverted;
      row["rel_error"] = s.force_N > 0.0 ? sim_force / inverted - 1.0 : sim_force - inverted;
      row["saturation_limited"] = p_hold > plant.pressure_limits.max_Pa;
      cells.push_back(detail::fmt("%.4f", s.force_N));
      cells.push_back(detail::fmt("%.1f", p_hold));
      cells.push_back(detail::fmt("%.4f", sim_force));
      cells.push_back(detail::fmt("%.4f", inverted));
    }

    json manifest;
    manifest["tool"] = kToolName;
    manifest["version"] = kToolVersion;
    manifest["scenario"] = name;
    manifest["finger"] = f.raw;
    manifest["seed"] = seed;
    manifest["dt_s"] = plant.dt_s;
    manifest["actuator_bandwidth_hz"] = plant.actuator_bandwidth_hz;
    manifest["pressure_limits_Pa"] = {plant.pressure_limits.min_Pa, plant.pressure_limits.max_Pa};
    manifest["files"] = detail::channel_files(dir, r);
    detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    row["files"] = manifest["files"];
    return std::pair{row, cells};
  });

  json results = json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& [row, cells] : rows) {
    results.push_back(row);
    table.push_back(cells);
  }
  res.report["results"] = results;
  std::vector<std::string> header;
  switch (scenario) {
    case SimScenario::free_decay: header = {"Finger", "theta0 (deg)", "Samples"}; break;
    case SimScenario::ramp:
      header = {"Finger", "theta(P_max) sim (deg)", "theta(P_max) static map (deg)",
                "Max deviation after transient (%)"};
      break;
    case SimScenario::hold_force:
      header = {"Finger", "Target force (N)", "Holding pressure (Pa)", "Equilibrium force (N)",
                "Static-map force (N)"};
      break;
  }
  detail::finish(res, std::string("Scenario: ") + name + "\n\n" + detail::table(header, table));
  return res;
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

struct TrackOptions {
  bool feedforward = true;  // prbm-ldm when true, bare pid otherwise
  double perturb_k = 0.0;   // relative change of the plant's true stiffness
};

inline CommandResult cmd_track(const CommonOptions& opt, const TrackOptions& to) {
  const ExperimentConfig exp = load_experiment(opt.config);
  const std::uint64_t seed = opt.seed.value_or(exp.seed);
  const auto fingers = detail::select_fingers(exp, opt.fingers);
  const char* ctrl_name = to.feedforward ? "prbm-ldm" : "pid";
  CommandResult res;
  res.dir = detail::output_root(opt, &exp) / "track" /
            (std::string(ctrl_name) + (to.perturb_k != 0.0 ? detail::fmt("_k%+g", to.perturb_k) : ""));
  res.report = detail::base_report("track", exp, seed);
  res.report["controller"] = ctrl_name;
  res.report["plant_perturbation"] = {{"stiffness_k_rel", to.perturb_k}, {"perturbed", to.perturb_k != 0.0}};
  if (!(1.0 + to.perturb_k > 0.0)) throw ConfigError("--perturb-k must be > -1");

  const double rate = exp.position_gains.loop_rate_hz;
  const Trace ref = control::generate_reference(exp.reference, rate);
  const std::size_t skip =
      exp.reference.kind == control::ReferenceKind::sine
          ? static_cast<std::size_t>(std::llround(exp.track.skip_periods * exp.reference.period_s * rate))
          : 0;

  struct Row {
    json j;
    std::vector<std::string> cells;
    bool unstable = false;
  };
  const auto rows = detail::for_each_finger(fingers.size(), [&](std::size_t fi) {
    const FingerConfig& f = *fingers[fi];
    sim::PlantConfig plant = make_plant(exp, f);
    const DynamicCoefficients model = plant.coefficients;
    plant.coefficients.stiffness_k *= 1.0 + to.perturb_k;
    detail::fit_step(plant);
    control::ControllerConfig ctrl{exp.position_gains, exp.limits, to.feedforward};
    Row row;
    row.j["finger"] = f.name;
    row.j["plant_dt_s"] = plant.dt_s;
    try {
      const auto run = scenario::run_tracking(plant, model, ctrl, ref,
                                              deg_to_rad(exp.track.sensor_noise_sd_deg),
                                              detail::derive_seed(seed, fi, 0));
      const auto rep = control::evaluate_tracking(ref, run.measured, skip);
      row.j["max_error_deg"] = rad_to_deg(rep.max_error);
      row.j["rmse_deg"] = rad_to_deg(rep.rmse);
      row.j["skipped_samples"] = skip;
      const auto dir = detail::prepare_dir(res.dir / f.name);
      std::ostringstream os;
      os << "t_s,reference_deg,measured_deg,error_deg,command_Pa\n";
      for (std::size_t i = 0; i < ref.size(); ++i) {
        os << io::format_double(ref.time(i)) << ',' << io::format_double(rad_to_deg(ref.values[i]))
           << ',' << io::format_double(rad_to_deg(run.measured.values[i])) << ','
           << io::format_double(rad_to_deg(ref.values[i] - run.measured.values[i])) << ','
           << io::format_double(run.command.values[i]) << '\n';
      }
      detail::write_text(dir / "tracking.csv", os.str());
      row.j["tracking_csv"] = io::hex64(io::fnv1a64(os.str()));
      row.cells = {f.name, detail::fmt("%.2f", rad_to_deg(rep.max_error)),
                   detail::fmt("%.2f", rad_to_deg(rep.rmse))};
    } catch (const InstabilityError& e) {
      row.unstable = true;
      row.j["error"] = e.what();
      row.cells = {f.name, "unstable", "unstable"};
    } catch (const DivergenceError& e) {
      row.unstable = true;
      row.j["error"] = e.what();
      row.cells = {f.name, "diverged", "diverged"};
    }
    return row;
  });

  json results = json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    results.push_back(r.j);
    table.push_back(r.cells);
    if (r.unstable) {
      res.exit_code = kExitInstability;
      std::cerr << kToolName << ": " << r.j["finger"].get<std::string>() << ": "
                << r.j["error"].get<std::string>() << '\n';
    }
  }
  res.report["results"] = results;
  const std::string title = std::string("Position tracking, ") +
                            (to.feedforward ? "PRBM+LDM feedforward + PID" : "bare PID") +
                            (to.perturb_k != 0.0 ? detail::fmt(", plant k perturbed by %+.1f%%", 100.0 * to.perturb_k) : "") +
                            "\n\n";
  detail::finish(res, title + detail::table({"Finger", "Max. Error (deg)", "RMSE (deg)"}, table));
  return res;
}

// ---------------------------------------------------------------------------
// force
// ---------------------------------------------------------------------------

struct ForceOptions {
  std::optional<double> force_ref_N;
  std::optional<double> contact_deg;
};

inline CommandResult cmd_force(const CommonOptions& opt, const ForceOptions& fo) {
  const ExperimentConfig exp = load_experiment(opt.config);
  const std::uint64_t seed = opt.seed.value_or(exp.seed);
  const auto fingers = detail::select_fingers(exp, opt.fingers);
  CommandResult res;
  res.dir = detail::output_root(opt, &exp) / "force";
  res.report = detail::base_report("force", exp, seed);

  scenario::ForceScenario sc;
  sc.contact_angle_rad = deg_to_rad(fo.contact_deg.value_or(exp.force.contact_angle_deg));
  sc.force_ref_N = fo.force_ref_N.value_or(exp.force.force_N);
  sc.duration_s = exp.force.duration_s;
  if (!(sc.contact_angle_rad >= 0.0 && sc.contact_angle_rad <= kPi))
    throw ConfigError("contact angle must lie in [0, 180] deg");
  if (!(sc.force_ref_N >= 0.0)) throw ConfigError("force reference must be >= 0");
  res.report["force_ref_N"] = sc.force_ref_N;
  res.report["contact_angle_deg"] = rad_to_deg(sc.contact_angle_rad);

  struct Row {
    json j;
    std::vector<std::string> cells;
    bool unstable = false;
  };
  const auto rows = detail::for_each_finger(fingers.size(), [&](std::size_t fi) {
    const FingerConfig& f = *fingers[fi];
    const sim::PlantConfig plant = make_plant(exp, f);
    control::ForceControllerConfig ctrl{{exp.force_gains, exp.limits, true}, std::nullopt};
    Row row;
    row.j["finger"] = f.name;
    try {
      const auto run = scenario::run_force_contact(plant, plant.coefficients, ctrl, sc);
      row.j["steady_state_force_N"] = run.steady_state_force_N;
      row.j["force_error_N"] = run.steady_state_force_N - sc.force_ref_N;
      row.j["settled"] = run.settled;
      row.j["settling_time_s"] = run.settled ? json(run.settling_time_s) : json(nullptr);
      row.j["saturation_limited"] = run.saturation_limited;
      row.j["max_force_N"] = run.max_force_N;
      const auto dir = detail::prepare_dir(res.dir / f.name);
      std::ostringstream os;
      os << "t_s,force_N,force_estimate_N,theta_deg,command_Pa\n";
      for (std::size_t i = 0; i < run.force.size(); ++i) {
        os << io::format_double(run.force.time(i)) << ',' << io::format_double(run.force.values[i])
           << ',' << io::format_double(run.force_estimate.values[i]) << ','
           << io::format_double(rad_to_deg(run.theta.values[i])) << ','
           << io::format_double(run.command.values[i]) << '\n';
      }
      detail::write_text(dir / "force.csv", os.str());
      row.j["force_csv"] = io::hex64(io::fnv1a64(os.str()));
      row.cells = {f.name, detail::fmt("%.4f", run.steady_state_force_N),
                   run.settled ? detail::fmt("%.2f", run.settling_time_s) : "not settled",
                   run.saturation_limited ? "yes" : "no", detail::fmt("%.2f", run.max_force_N)};
    } catch (const InstabilityError& e) {
      row.unstable = true;
      row.j["error"] = e.what();
      row.cells = {f.name, "unstable", "-", "-", "-"};
    } catch (const DivergenceError& e) {
      row.unstable = true;
      row.j["error"] = e.what();
      row.cells = {f.name, "diverged", "-", "-", "-"};
    }
    return row;
  });

  json results = json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    results.push_back(r.j);
    table.push_back(r.cells);
    if (r.unstable) res.exit_code = kExitInstability;
  }
  res.report["results"] = results;
  detail::finish(res, detail::fmt("Force control, reference %.3f N", sc.force_ref_N) +
                          detail::fmt(" at contact angle %.1f deg\n\n", rad_to_deg(sc.contact_angle_rad)) +
                          detail::table({"Finger", "Steady-state force (N)", "Settling time (s)",
                                         "Saturation-limited", "Max force (N)"},
                                        table));
  return res;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

inline CommandResult cmd_calibrate(const CommonOptions& opt, const std::string& voltage_path,
                                   const std::string& angle_path) {
  CommandResult res;
  res.dir = detail::output_root(opt, nullptr) / "calibrate";
  const Trace raw = io::read_trace_csv(voltage_path);
  const Trace ref = io::read_trace_csv(angle_path);
  const auto fit = signal::calibrate_linear(raw, ref);
  res.report["tool"] = kToolName;
  res.report["version"] = kToolVersion;
  res.report["command"] = "calibrate";
  res.report["inputs"] = {{voltage_path, io::file_checksum(voltage_path)},
                          {angle_path, io::file_checksum(angle_path)}};
  res.report["raw_unit"] = std::string(to_string(raw.unit));
  res.report["reference_unit"] = std::string(to_string(ref.unit));
  res.report["slope"] = fit.slope;
  res.report["intercept"] = fit.intercept;
  res.report["r_squared"] = fit.r_squared;
  detail::finish(res, "Linear calibration " + std::string(to_string(ref.unit)) + " = slope * " +
                          std::string(to_string(raw.unit)) + " + intercept\n\n" +
                          detail::table({"slope", "intercept", "r_squared"},
                                        {{detail::fmt("%.10g", fit.slope), detail::fmt("%.10g", fit.intercept),
                                          detail::fmt("%.10g", fit.r_squared)}}));
  return res;
}

// ---------------------------------------------------------------------------

/// Maps a library exception to the documented exit code, printing a diagnostic.
inline int exit_code_for(const std::exception& e) {
  std::cerr << kToolName << ": " << e.what() << '\n';
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const ParameterError*>(&e))
    return kExitConfig;
  if (dynamic_cast<const FileError*>(&e)) return kExitFile;
  if (dynamic_cast<const EstimationError*>(&e)) return kExitEstimation;
  if (dynamic_cast<const InstabilityError*>(&e) || dynamic_cast<const DivergenceError*>(&e))
    return kExitInstability;
  return kExitUsage;
}

}  // namespace prbm::cli
