// prbm-ldm: estimate, simulate, track, force, calibrate.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "prbm/cli/commands.hpp"

namespace {

using namespace prbm::cli;

void add_common(CLI::App* sub, CommonOptions& opt, bool needs_config = true) {
  auto* c = sub->add_option("-c,--config", opt.config, "Experiment config (JSON)");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", opt.seed, "Override the config seed");
  sub->add_option("-o,--out", opt.out, "Output root (else $PRBM_LDM_OUT, else config output_dir)");
  sub->add_option("-f,--finger", opt.fingers, "Restrict to the named finger(s)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRBM finger modeling, LDM estimation and model-based control"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  CommonOptions opt;

  EstimateOptions eo;
  auto* est = app.add_subcommand("estimate", "Estimate k and b from free-decay traces");
  add_common(est, opt);
  est->add_flag("--synthetic", eo.synthetic, "Generate noisy free-decay trials from the configured fingers");
  est->add_option("--trials", eo.trials, "Number of synthetic trials per finger")->check(CLI::PositiveNumber);
  est->add_option("--trace", eo.traces, "Recorded angle trace CSV (one per trial)")->check(CLI::ExistingFile);

  std::string scenario;
  auto* simc = app.add_subcommand("simulate", "Run an open-loop plant scenario");
  add_common(simc, opt);
  simc->add_option("--scenario", scenario, "free-decay | ramp | hold-force")
      ->required()
      ->check(CLI::IsMember({"free-decay", "ramp", "hold-force"}));

  TrackOptions to;
  std::string controller = "prbm-ldm";
  auto* trk = app.add_subcommand("track", "Closed-loop position tracking");
  add_common(trk, opt);
  trk->add_option("--controller", controller, "prbm-ldm (feedforward + PID) | pid")
      ->check(CLI::IsMember({"prbm-ldm", "pid"}));
  trk->add_option("--perturb-k", to.perturb_k, "Relative error of the plant stiffness vs. the model");

  ForceOptions fo;
  auto* frc = app.add_subcommand("force", "Closed-loop contact force control");
  add_common(frc, opt);
  frc->add_option("--force-ref", fo.force_ref_N, "Force reference (N)");
  frc->add_option("--contact-deg", fo.contact_deg, "Contact angle (deg)");

  std::string voltage, angle;
  auto* cal = app.add_subcommand("calibrate", "Fit a linear sensor calibration");
  add_common(cal, opt, false);
  cal->add_option("--voltage", voltage, "Raw sensor trace CSV")->required()->check(CLI::ExistingFile);
  cal->add_option("--angle", angle, "Reference angle trace CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandResult res;
    if (est->parsed()) res = cmd_estimate(opt, eo);
    else if (simc->parsed())
      res = cmd_simulate(opt, scenario == "free-decay" ? SimScenario::free_decay
                              : scenario == "ramp"     ? SimScenario::ramp
                                                       : SimScenario::hold_force);
    else if (trk->parsed()) {
      to.feedforward = controller == "prbm-ldm";
      res = cmd_track(opt, to);
    } else if (frc->parsed()) res = cmd_force(opt, fo);
    else res = cmd_calibrate(opt, voltage, angle);
    std::cout << prbm::io::read_file((res.dir / "report.txt").string());
    std::cout << "wrote " << (res.dir / "report.json").string() << '\n';
    return res.exit_code;
  } catch (const std::exception& e) {
    return exit_code_for(e);
  }
}
