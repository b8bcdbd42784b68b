// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prbm/cli/config.hpp"
#include "prbm/control.hpp"
#include "prbm/io.hpp"
#include "prbm/scenario.hpp"
#include "prbm/signal.hpp"
#include "prbm/sim.hpp"

namespace fs = std::filesystem;
using namespace prbm;

namespace {

const std::string kConfig = std::string(PRBM_CONFIG_DIR) + "/experiment.json";

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const cli::FingerConfig& finger(const cli::ExperimentConfig& exp, const std::string& name) {
  for (const auto& f : exp.fingers)
    if (f.name == name) return f;
  throw ConfigError("no finger " + name);
}

Outcome ldm_round_trip(const cli::ExperimentConfig& exp) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_k = 0, worst_b = 0;
  std::size_t fi = 0;
  for (const auto& f : exp.fingers) {
    const auto plant = cli::make_plant(exp, f);
    std::vector<signal::LdmEstimate> est;
    for (std::uint64_t t = 0; t < 10; ++t) {
      const auto r = sim::run_free_decay(plant, deg_to_rad(30.0), 8.0, deg_to_rad(0.5), 1000 * fi + t + 1);
      est.push_back(signal::estimate_free_decay(r.theta, plant.coefficients.inertia_A, exp.estimate.ldm));
    }
    const auto a = signal::aggregate_trials(est);
    worst_k = std::max(worst_k, std::abs(a.mean.stiffness_k / f.stiffness_k - 1));
    worst_b = std::max(worst_b, std::abs(a.mean.damping_b / f.damping_b - 1));
    ++fi;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst_k < 0.02 && worst_b < 0.10 && secs < 10.0,
          fmt("5 fingers x 10 trials, worst |k err| %.2f%% (< 2%%), worst |b err| %.2f%% (< 10%%), %.2f s (< 10 s)",
              100 * worst_k, 100 * worst_b, secs)};
}

Outcome static_map(const cli::ExperimentConfig& exp) {
  const auto plant = cli::make_plant(exp, finger(exp, "index"));
  const auto& c = plant.coefficients;
  const Trace p = sim::pressure_ramp(200e3, 60.0, 100.0);
  const auto r = sim::run_pressure_profile(plant, p);
  double worst = 0;
  const std::size_t start = p.size() / 20;
  for (std::size_t i = start; i < p.size(); ++i)
    worst = std::max(worst, std::abs(r.theta.values[i] / (c.moment_N * p.values[i] / c.stiffness_k) - 1));
  return {worst < 0.01, fmt("index 60 s ramp, max |theta/(N P/k) - 1| after %.1f s = %.3f%% (< 1%%)",
                            p.time(start), 100 * worst)};
}

Outcome force_estimator(const cli::ExperimentConfig& exp) {
  const auto plant = cli::make_plant(exp, finger(exp, "index"));
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> angle(deg_to_rad(30.0), deg_to_rad(120.0)), force(0.1, 2.0);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double th = angle(rng), f = force(rng);
    const auto pinch = scenario::run_static_pinch(plant, th, f);
    worst = std::max(worst, std::abs(pinch.estimated_force_N / pinch.true_force_N - 1));
    worst = std::max(worst, std::abs(pinch.true_force_N / f - 1));
  }
  return {worst < 0.02, fmt("20 random pinches, worst relative force error %.2e (< 2e-2)", worst)};
}

Outcome controller_ordering(const cli::ExperimentConfig& exp) {
  const auto plant = cli::make_plant(exp, finger(exp, "index"));
  const double rate = exp.position_gains.loop_rate_hz;
  control::ReferenceSpec spec{control::ReferenceKind::sine, deg_to_rad(45), deg_to_rad(45), 0.75, 3.75};
  const Trace ref = control::generate_reference(spec, rate);
  const auto skip = static_cast<std::size_t>(std::llround(0.75 * rate));
  auto rmse = [&](bool ff) {
    const auto run = scenario::run_tracking(plant, plant.coefficients, {exp.position_gains, exp.limits, ff}, ref);
    return rad_to_deg(control::evaluate_tracking(ref, run.measured, skip).rmse);
  };
  const double with_ff = rmse(true), bare = rmse(false);
  return {with_ff < bare && with_ff < 5.0,
          fmt("index 0-90 deg sine, RMSE PRBM+LDM+PID %.2f deg vs bare PID %.2f deg (< 5 deg, ordered)", with_ff,
              bare)};
}

Outcome force_settling(const cli::ExperimentConfig& exp) {
  const auto plant = cli::make_plant(exp, finger(exp, "index"));
  const control::ForceControllerConfig ctrl{{exp.force_gains, exp.limits, true}, std::nullopt};
  scenario::ForceScenario sc;
  const auto nominal = scenario::run_force_contact(plant, plant.coefficients, ctrl, sc);
  sc.force_ref_N = 1.5 * nominal.max_force_N;
  const auto over = scenario::run_force_contact(plant, plant.coefficients, ctrl, sc);
  sc.force_ref_N = 0.9 * nominal.max_force_N;
  const auto under = scenario::run_force_contact(plant, plant.coefficients, ctrl, sc);
  const bool ok = nominal.settled && nominal.settling_time_s < 2.0 &&
                  std::abs(nominal.steady_state_force_N - 1.0) < 0.02 && !nominal.saturation_limited &&
                  over.saturation_limited && !over.settled && !under.saturation_limited;
  return {ok, fmt("1 N at 90 deg settles in %.2f s to %.4f N (< 2 s, 2%%); %.1f N flagged %s, %.1f N flagged %s",
                  nominal.settling_time_s, nominal.steady_state_force_N, 1.5 * nominal.max_force_N,
                  over.saturation_limited ? "saturated" : "NOT saturated", 0.9 * nominal.max_force_N,
                  under.saturation_limited ? "saturated" : "reachable")};
}

Outcome numerical_hygiene(const cli::ExperimentConfig& exp) {
  auto plant = cli::make_plant(exp, finger(exp, "index"));
  const auto c = plant.coefficients;
  std::vector<std::string> bad;

  // RK4 order from the analytic free decay.
  auto decay_error = [&](double dt) {
    auto p = plant;
    p.dt_s = dt;
    sim::PlantState s{{0.5, 0.0}, 0.0};
    const double t_end = 0.5;
    for (long i = 0; i < std::lround(t_end / dt); ++i) s = sim::step(p, s, 0.0);
    const double wn = c.natural_frequency(), z = c.damping_ratio(), wd = wn * std::sqrt(1 - z * z);
    const double exact = 0.5 * std::exp(-z * wn * t_end) * (std::cos(wd * t_end) + z * wn / wd * std::sin(wd * t_end));
    return std::abs(s.finger.theta_rad - exact);
  };
  const double factor = decay_error(1e-3) / decay_error(5e-4);
  if (!(factor >= 8 && factor <= 32)) bad.push_back("rk4");

  auto undamped = plant;
  undamped.coefficients.damping_b = 0.0;
  sim::PlantState s{{0.3, 0.0}, 0.0};
  auto energy = [&](const sim::PlantState& x) {
    return 0.5 * c.inertia_A * x.finger.theta_dot_rad_s * x.finger.theta_dot_rad_s +
           0.5 * c.stiffness_k * x.finger.theta_rad * x.finger.theta_rad;
  };
  const double e0 = energy(s);
  for (int i = 0; i < 1000; ++i) s = sim::step(undamped, s, 0.0);
  const double drift = std::abs(energy(s) / e0 - 1);
  if (!(drift < 1e-6)) bad.push_back("energy");

  const Trace dc(100.0, std::vector<double>(400, 1.0), Unit::angle_rad);
  double dc_err = 0;
  for (double v : signal::butterworth_lowpass(dc, 10.0, 2).values) dc_err = std::max(dc_err, std::abs(v - 1));
  if (!(dc_err < 1e-9)) bad.push_back("dc gain");

  double jdev = 0;
  for (int i = 0; i < 1000; ++i) {
    const double th = -kPi + 2 * kPi * i / 999.0;
    jdev = std::max(jdev, std::abs(jacobian(plant.geometry, th).norm() / plant.geometry.half_link() - 1));
  }
  if (!(jdev < 1e-12)) bad.push_back("|J|");

  signal::PeakSet half;
  half.indices = {0, 20};
  half.positions = {0.0, 20.0};
  half.amplitudes = {1.0, 0.5};
  const auto ld = signal::log_decrement(half, 100.0);
  const double ld_err = std::max(std::abs(ld.delta - std::log(2.0)), std::abs(ld.zeta - 0.10965258099938507));
  if (!(ld_err < 1e-9)) bad.push_back("ln2");

  return {bad.empty(), fmt("rk4 factor %.2f, energy drift %.1e, DC err %.1e, |J| dev %.1e, ln2 err %.1e%s", factor,
                           drift, dc_err, jdev, ld_err, bad.empty() ? "" : " (out of bounds)")};
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(PRBM_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "prbm_acceptance_repro";
  fs::remove_all(root);
  fs::create_directories(root);
  Trace mv(100.0, {}, Unit::voltage_mV), deg(100.0, {}, Unit::angle_deg);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.3);
  for (int i = 0; i < 200; ++i) {
    mv.values.push_back(100.0 + 5.0 * i);
    deg.values.push_back(0.09 * mv.values.back() + 5.0 + n(rng));
  }
  io::write_trace_csv((root / "v.csv").string(), mv);
  io::write_trace_csv((root / "a.csv").string(), deg);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"estimate", "--synthetic"},
      {"simulate", "--scenario free-decay"},
      {"simulate", "--scenario ramp"},
      {"simulate", "--scenario hold-force"},
      {"track", "--controller prbm-ldm"},
      {"track", "--controller pid"},
      {"track", "--perturb-k 0.2"},
      {"force", ""},
  };
  int failures = 0;
  std::size_t files = 0;
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    for (const auto& [cmd, args] : commands)
      failures += run_cli(cmd + " -c " + kConfig + " --seed 7 " + args + " -o " + out) != 0;
    failures += run_cli("calibrate --voltage " + (root / "v.csv").string() + " --angle " +
                        (root / "a.csv").string() + " -o " + out) != 0;
  }
  std::size_t mismatched = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || io::read_file(e.path().string()) != io::read_file(other.string())) ++mismatched;
  }
  fs::remove_all(root);
  return {failures == 0 && mismatched == 0 && files > 0,
          fmt("9 commands run twice, %zu files compared, %zu differ, %d nonzero exits", files, mismatched, failures)};
}

}  // namespace

int main() {
  const auto exp = cli::load_experiment(kConfig);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"LDM round-trip", [&] { return ldm_round_trip(exp); }},
      {"Static map fidelity", [&] { return static_map(exp); }},
      {"Force estimator consistency", [&] { return force_estimator(exp); }},
      {"Controller ordering", [&] { return controller_ordering(exp); }},
      {"Force control settling", [&] { return force_settling(exp); }},
      {"Numerical hygiene", [&] { return numerical_hygiene(exp); }},
      {"CLI reproducibility", [] { return reproducibility(); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
