#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "prbm/cli/commands.hpp"
#include "prbm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prbm;

namespace {

const std::string kCli = PRBM_CLI;
const std::string kConfigDir = PRBM_CONFIG_DIR;

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("prbm_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  /// Experiment config with absolute finger paths, optionally patched.
  std::string config(const json& patch = json::object()) {
    json j = json::parse(std::ifstream(kConfigDir + "/experiment.json"));
    for (auto& f : j["fingers"]) f = kConfigDir + "/" + f.get<std::string>();
    j.merge_patch(patch);
    const auto path = (dir / "experiment.json").string();
    std::ofstream(path) << j.dump(2);
    return path;
  }

  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args + " >" +
                            (dir / "stdout.txt").string() + " 2>" + (dir / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string err() { return io::read_file((dir / "stderr.txt").string()); }
  json report(const fs::path& rel) { return json::parse(std::ifstream(dir / rel / "report.json")); }
  json row(const json& rep, const std::string& finger) {
    for (const auto& r : rep["results"])
      if (r["finger"] == finger) return r;
    throw std::runtime_error("no row for " + finger);
  }
};

}  // namespace

TEST_F(Cli, SyntheticEstimateRecoversIndex) {
  const auto out = (dir / "out").string();
  ASSERT_EQ(run("estimate -c " + config() + " --synthetic --trials 10 --finger index -o " + out), 0) << err();
  const auto rep = report("out/estimate");
  ASSERT_EQ(rep["results"].size(), 1u);
  const json r = row(rep, "index");
  EXPECT_EQ(r["trials_ok"], 10);
  EXPECT_LT(std::abs(r["stiffness_rel_error"].get<double>()), 0.02);
  EXPECT_LT(std::abs(r["damping_rel_error"].get<double>()), 0.10);
}

TEST_F(Cli, EmptyTraceFileIsFileError) {
  const auto empty = (dir / "empty.csv").string();
  std::ofstream{empty};
  EXPECT_EQ(run("estimate -c " + config() + " --finger index --trace " + empty + " -o " + (dir / "o").string()),
            cli::kExitFile);
  EXPECT_NE(err().find(empty), std::string::npos);
}

TEST_F(Cli, MalformedTraceReportsRow) {
  const auto bad = (dir / "bad.csv").string();
  std::ofstream(bad) << "t_s,angle_rad\n0,0.1\n0.01,oops\n";
  EXPECT_EQ(run("estimate -c " + config() + " --finger index --trace " + bad + " -o " + (dir / "o").string()),
            cli::kExitFile);
  EXPECT_NE(err().find(bad + ":3:"), std::string::npos) << err();
}

TEST_F(Cli, SimulatedTracesReingestAndMirrorTableFormat) {
  // Clean traces need no smoothing; the low-pass would shift k by ~1e-4.
  const auto cfg = config({{"simulate", {{"free_decay", {{"noise_sd_deg", 0.0}}}}},
                           {"estimate", {{"filter", {{"enabled", false}}}}}});
  const auto out = (dir / "out").string();
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario free-decay --finger thumb -o " + out), 0) << err();
  const auto trace = dir / "out/simulate/free-decay/thumb/theta_rad.csv";
  ASSERT_TRUE(fs::exists(trace));
  const Trace t = io::read_trace_csv(trace.string());
  EXPECT_EQ(t.sample_rate_hz, 100.0);
  ASSERT_EQ(run("estimate -c " + cfg + " --finger thumb --trace " + trace.string() + " -o " + out), 0) << err();
  const std::string table = io::read_file((dir / "out/estimate/report.txt").string());
  EXPECT_NE(table.find("0.6541 / 0.0011"), std::string::npos) << table;
  EXPECT_EQ(report("out/estimate")["mode"], "traces");
}

TEST_F(Cli, NonOscillatoryTrialDoesNotAbortBatch) {
  const auto good = dir / "good.csv";
  const auto flat = dir / "flat.csv";
  {
    const auto cfg = config({{"simulate", {{"free_decay", {{"noise_sd_deg", 0.0}}}}}});
    ASSERT_EQ(run("simulate -c " + cfg + " --scenario free-decay --finger index -o " + (dir / "s").string()), 0);
    fs::copy_file(dir / "s/simulate/free-decay/index/theta_rad.csv", good);
    Trace decay(100.0, {}, Unit::angle_rad);
    for (int i = 0; i < 300; ++i) decay.values.push_back(0.5 * std::exp(-0.02 * i));
    io::write_trace_csv(flat.string(), decay);
  }
  const int rc = run("estimate -c " + config() + " --finger index --trace " + good.string() + " --trace " +
                     flat.string() + " -o " + (dir / "o").string());
  EXPECT_EQ(rc, 0) << err();
  const json r = row(report("o/estimate"), "index");
  EXPECT_EQ(r["trials_ok"], 1);
  EXPECT_EQ(r["trials_failed"], 1);
  EXPECT_EQ(r["errors"][0]["trial"], 1);
}

TEST_F(Cli, AllTrialsFailingIsEstimationExit) {
  const auto flat = dir / "flat.csv";
  Trace decay(100.0, {}, Unit::angle_rad);
  for (int i = 0; i < 300; ++i) decay.values.push_back(0.5 * std::exp(-0.02 * i));
  io::write_trace_csv(flat.string(), decay);
  EXPECT_EQ(run("estimate -c " + config() + " --finger index --trace " + flat.string() + " -o " + (dir / "o").string()),
            cli::kExitEstimation);
}

TEST_F(Cli, FreeDecayFilesAreReproducible) {
  const auto cfg = config();
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario free-decay -o " + (dir / "a").string()), 0);
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario free-decay -o " + (dir / "b").string()), 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto other = dir / "b" / fs::relative(e.path(), dir / "a");
    EXPECT_EQ(io::read_file(e.path().string()), io::read_file(other.string())) << e.path();
  }
  const json m = json::parse(std::ifstream(dir / "a/simulate/free-decay/index/manifest.json"));
  EXPECT_EQ(m["files"]["theta_rad.csv"],
            io::file_checksum((dir / "a/simulate/free-decay/index/theta_rad.csv").string()));
  // A different seed changes the noise.
  ASSERT_EQ(run("simulate -c " + cfg + " --seed 99 --scenario free-decay -o " + (dir / "c").string()), 0);
  EXPECT_NE(io::read_file((dir / "a/simulate/free-decay/index/theta_rad.csv").string()),
            io::read_file((dir / "c/simulate/free-decay/index/theta_rad.csv").string()));
}

TEST_F(Cli, RampMatchesStaticMap) {
  ASSERT_EQ(run("simulate -c " + config() + " --scenario ramp --finger index -o " + (dir / "o").string()), 0);
  const json r = row(report("o/simulate/ramp"), "index");
  EXPECT_LT(std::abs(r["final_rel_error"].get<double>()), 0.01);
  EXPECT_LT(r["max_rel_error_after_transient"].get<double>(), 0.01);
  const Trace p = io::read_trace_csv((dir / "o/simulate/ramp/index/pressure_Pa.csv").string());
  const Trace th = io::read_trace_csv((dir / "o/simulate/ramp/index/theta_rad.csv").string());
  ASSERT_EQ(p.size(), th.size());
  for (std::size_t i = 1; i < th.size(); ++i) ASSERT_GE(th.values[i], th.values[i - 1] - 1e-9);
}

TEST_F(Cli, HoldForceMatchesInversion) {
  ASSERT_EQ(run("simulate -c " + config() + " --scenario hold-force -o " + (dir / "o").string()), 0);
  for (const auto& r : report("o/simulate/hold-force")["results"]) {
    EXPECT_NEAR(r["equilibrium_force_N"].get<double>(), r["model_force_N"].get<double>(), 1e-6);
    EXPECT_NEAR(r["equilibrium_force_N"].get<double>(), 1.0, 1e-6);
  }
}

TEST_F(Cli, TrackOrderingAndPerturbationFlag) {
  const auto cfg = config();
  ASSERT_EQ(run("track -c " + cfg + " --finger index -o " + (dir / "o").string()), 0) << err();
  ASSERT_EQ(run("track -c " + cfg + " --finger index --controller pid -o " + (dir / "o").string()), 0);
  const double ff = row(report("o/track/prbm-ldm"), "index")["rmse_deg"];
  const double pid = row(report("o/track/pid"), "index")["rmse_deg"];
  EXPECT_LT(ff, pid);
  EXPECT_LT(ff, 5.0);
  EXPECT_FALSE(report("o/track/prbm-ldm")["plant_perturbation"]["perturbed"].get<bool>());

  ASSERT_EQ(run("track -c " + cfg + " --finger index --perturb-k 0.2 -o " + (dir / "o").string()), 0);
  const auto rep = report("o/track/prbm-ldm_k+0.2");
  EXPECT_TRUE(rep["plant_perturbation"]["perturbed"].get<bool>());
  EXPECT_DOUBLE_EQ(rep["plant_perturbation"]["stiffness_k_rel"].get<double>(), 0.2);
  EXPECT_LT(row(rep, "index")["plant_dt_s"].get<double>(), 1e-3);
}

TEST_F(Cli, ZeroGainPidIsOpenLoopError) {
  const auto cfg = config({{"position_controller", {{"kp", 0}, {"ki", 0}, {"kd", 0}}}});
  ASSERT_EQ(run("track -c " + cfg + " --finger index --controller pid -o " + (dir / "o").string()), 0);
  const double rmse = row(report("o/track/pid"), "index")["rmse_deg"];
  // Zero input leaves the finger at 0, so the error is the reference itself.
  const auto ref = control::generate_reference({control::ReferenceKind::sine, 45.0, 45.0, 0.75, 3.75}, 100.0,
                                               Unit::angle_deg);
  double ss = 0;
  for (std::size_t i = 75; i < ref.size(); ++i) ss += ref.values[i] * ref.values[i];
  EXPECT_NEAR(rmse, std::sqrt(ss / (ref.size() - 75)), 1e-9);
}

TEST_F(Cli, ForceSettlesAndDetectsSaturation) {
  const auto cfg = config();
  ASSERT_EQ(run("force -c " + cfg + " -o " + (dir / "o").string()), 0) << err();
  for (const auto& r : report("o/force")["results"]) {
    EXPECT_NEAR(r["steady_state_force_N"].get<double>(), 1.0, 0.02);
    EXPECT_TRUE(r["settled"].get<bool>());
    EXPECT_LT(r["settling_time_s"].get<double>(), 2.0);
  }
  ASSERT_EQ(run("force -c " + cfg + " --force-ref 0 -o " + (dir / "z").string()), 0);
  for (const auto& r : report("z/force")["results"]) EXPECT_NEAR(r["steady_state_force_N"].get<double>(), 0.0, 1e-9);
  ASSERT_EQ(run("force -c " + cfg + " --force-ref 40 -o " + (dir / "s").string()), 0);
  for (const auto& r : report("s/force")["results"]) {
    EXPECT_TRUE(r["saturation_limited"].get<bool>());
    EXPECT_LT(r["max_force_N"].get<double>(), 40.0);
  }
  EXPECT_EQ(run("force -c " + cfg + " --contact-deg 200 -o " + (dir / "e").string()), cli::kExitConfig);
}

TEST_F(Cli, Calibrate) {
  Trace mv(100.0, {}, Unit::voltage_mV), deg(100.0, {}, Unit::angle_deg);
  for (int i = 0; i < 100; ++i) {
    mv.values.push_back(200.0 + 7.0 * i);
    deg.values.push_back(0.09 * mv.values.back() + 5.0);
  }
  io::write_trace_csv((dir / "v.csv").string(), mv);
  io::write_trace_csv((dir / "a.csv").string(), deg);
  ASSERT_EQ(run("calibrate --voltage " + (dir / "v.csv").string() + " --angle " + (dir / "a.csv").string() +
                " -o " + (dir / "o").string()),
            0)
      << err();
  const auto rep = report("o/calibrate");
  EXPECT_NEAR(rep["slope"].get<double>(), 0.09, 1e-10);
  EXPECT_NEAR(rep["intercept"].get<double>(), 5.0, 1e-10);
  EXPECT_NEAR(rep["r_squared"].get<double>(), 1.0, 1e-10);

  Trace flat(100.0, std::vector<double>(100, 3.0), Unit::voltage_mV);
  io::write_trace_csv((dir / "f.csv").string(), flat);
  EXPECT_EQ(run("calibrate --voltage " + (dir / "f.csv").string() + " --angle " + (dir / "a.csv").string() +
                " -o " + (dir / "o").string()),
            cli::kExitEstimation);
}

TEST_F(Cli, OutputDirectoryPrecedence) {
  const auto cfg = config({{"output_dir", (dir / "from_config").string()}});
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario ramp --finger index"), 0);
  EXPECT_TRUE(fs::exists(dir / "from_config/simulate/ramp/report.json"));
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario ramp --finger index", "PRBM_LDM_OUT=" + (dir / "env").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "env/simulate/ramp/report.json"));
  ASSERT_EQ(run("simulate -c " + cfg + " --scenario ramp --finger index -o " + (dir / "flag").string(),
                "PRBM_LDM_OUT=" + (dir / "env2").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "flag/simulate/ramp/report.json"));
  EXPECT_FALSE(fs::exists(dir / "env2"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), cli::kExitUsage);
  EXPECT_EQ(run("frobnicate"), cli::kExitUsage);
  EXPECT_EQ(run("simulate -c " + config() + " --scenario sideways"), cli::kExitUsage);
  EXPECT_EQ(run("--help"), cli::kExitOk);

  const auto broken = (dir / "broken.json").string();
  std::ofstream(broken) << "{ \"fingers\": [";
  EXPECT_EQ(run("track -c " + broken), cli::kExitConfig);

  EXPECT_EQ(run("track -c " + config({{"fingers", {"missing.json"}}})), cli::kExitFile);
  EXPECT_EQ(run("track -c " + config() + " --finger pinky"), cli::kExitConfig);
  EXPECT_EQ(run("track -c " + config({{"position_controller", {{"loop_rate_hz", -5}}}})), cli::kExitConfig);
  EXPECT_EQ(run("estimate -c " + config() + " -o " + (dir / "o").string()), cli::kExitConfig);
}

TEST_F(Cli, UnstableLoopExitsWithDiagnostic) {
  const auto cfg = config({{"plant", {{"pressure_max_Pa", 1e12}}},
                           {"position_controller", {{"kp", -1e6}, {"ki", 0}, {"kd", 0}}},
                           {"reference", {{"kind", "hold"}, {"offset_deg", -5}}}});
  EXPECT_EQ(run("track -c " + cfg + " --finger index --controller pid -o " + (dir / "o").string()),
            cli::kExitInstability);
  EXPECT_NE(err().find("unstable"), std::string::npos) << err();
}

TEST(CliConfig, FingerDefaultsAreValid) {
  const auto exp = cli::load_experiment(kConfigDir + "/experiment.json");
  ASSERT_EQ(exp.fingers.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(exp.fingers[i].name, cli::finger_names()[i]);
    EXPECT_NO_THROW(cli::make_plant(exp, exp.fingers[i]).validate());
  }
  EXPECT_EQ(exp.fingers[0].stiffness_k, 0.6541);
  EXPECT_EQ(exp.fingers[0].damping_b, 0.0011);
  EXPECT_EQ(exp.fingers[1].stiffness_k, 0.570);
  EXPECT_EQ(exp.fingers[1].damping_b, 0.0031);
}
