#include <gtest/gtest.h>

#include "viwo/config.hpp"
#include "viwo/evaluation.hpp"
#include "viwo/lie.hpp"
#include "viwo/log_io.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace viwo {
namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(VIWO_BIN) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("viwo_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_prefix(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0;
  return n;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// ---------------------------------------------------------------------------
// Log formats

MeasurementStream small_stream(bool noise) {
  SimConfig cfg;
  cfg.duration = 1.0;
  cfg.add_noise = noise;
  cfg.n_moving_landmarks = 3;
  return synthesize_measurements(cfg, generate_trajectory(cfg), generate_landmarks(cfg));
}

TEST(LogIo, RoundTripIsExact) {
  const MeasurementStream s = small_stream(true);
  std::stringstream ss;
  write_log(ss, s);
  const MeasurementStream r = read_log(ss);
  ASSERT_EQ(r.imu.size(), s.imu.size());
  ASSERT_EQ(r.wheel.size(), s.wheel.size());
  ASSERT_EQ(r.frames.size(), s.frames.size());
  EXPECT_EQ(r.imu[17].omega, s.imu[17].omega);
  EXPECT_EQ(r.imu[17].accel, s.imu[17].accel);
  EXPECT_EQ(r.wheel[33].v, s.wheel[33].v);
  EXPECT_EQ(r.frames[5].features, s.frames[5].features);
  EXPECT_TRUE(r.initial.rot.isApprox(s.initial.rot, 1e-15));
  EXPECT_EQ(r.initial.vel, s.initial.vel);
  EXPECT_EQ(r.initial.bg, s.initial.bg);
}

TEST(LogIo, HeaderMismatch) {
  std::istringstream in("# viwo-log v2\nIMU 0 0 0 0 0 0 0\n");
  try {
    read_log(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(LogIo, ReportsTheLineOfABadRecord) {
  std::istringstream in(
      "# viwo-log v1\nINIT 0 1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\nIMU 0 0 0 0 0 0 9.81\nIMU 0.01 0 0 x 0 0 9.81\n");
  try {
    read_log(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(LogIo, RejectsStructuralErrors) {
  const std::string init = "# viwo-log v1\nINIT 0 1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n";
  for (const std::string body : {"FRAME 0.1 2\nCAM 0.1 1 0 0\n", "CAM 0.1 1 0 0\n", "WHEEL 0.1 1\n",
                                 "IMU 0.2 0 0 0 0 0 0\nIMU 0.1 0 0 0 0 0 0\n", "BOGUS 1\n"}) {
    std::istringstream in(init + body);
    EXPECT_THROW(read_log(in), ParseError) << body;
  }
  std::istringstream no_init("# viwo-log v1\nIMU 0 0 0 0 0 0 0\n");
  EXPECT_THROW(read_log(no_init), ParseError);
}

TEST(LogIo, GroundTruthRoundTrip) {
  SimConfig cfg;
  cfg.duration = 1.0;
  cfg.n_moving_landmarks = 2;
  const GroundTruth gt = generate_trajectory(cfg);
  const MeasurementStream s = synthesize_measurements(cfg, gt, generate_landmarks(cfg));
  std::stringstream ss;
  write_ground_truth(ss, gt, s);
  const TruthLog t = read_ground_truth(ss);
  ASSERT_EQ(t.samples.size(), gt.samples.size());
  EXPECT_LT((t.samples[50].pos - gt.samples[50].pos).norm(), 1e-15);
  EXPECT_TRUE(t.samples[50].rot.isApprox(gt.samples[50].rot, 1e-15));
  EXPECT_EQ(t.moving_ids, s.moving_ids);
  EXPECT_EQ(t.at(0.505).stamp, 0.5);
}

TEST(LogIo, TrajectoryRoundTrip) {
  FilterState st;
  st.imu.rot = so3_exp(Vector3d(0.1, 0.2, 0.3));
  st.imu.pos = Vector3d(1, 2, 3);
  st.cov = MatrixXd::Identity(15, 15) * 0.25;
  std::stringstream ss;
  write_trajectory_header(ss);
  write_trajectory_row(ss, 1.5, st);
  const auto rows = read_trajectory(ss);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].t, 1.5);
  EXPECT_EQ(rows[0].state.pos, st.imu.pos);
  EXPECT_TRUE(rows[0].state.rot.isApprox(st.imu.rot, 1e-15));
  EXPECT_EQ(rows[0].cov_diag(4), 0.25);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsAndOverrides) {
  const RunConfig d = parse_run_config(nlohmann::json::object());
  EXPECT_EQ(d.mode, ErrorMode::PartialInvariant);
  EXPECT_EQ(d.window, 11);
  const RunConfig c = parse_run_config(nlohmann::json::parse(
      R"({"mode": "standard", "window": 8, "toggles": {"plane": false}, "sim": {"radius": 30, "noise": {"sigma_px": 2}}})"));
  EXPECT_EQ(c.mode, ErrorMode::Standard);
  EXPECT_EQ(c.window, 8);
  EXPECT_FALSE(c.plane);
  EXPECT_EQ(c.sim.radius, 30.0);
  EXPECT_EQ(c.sim.noise.sigma_px, 2.0);
  const EstimatorOptions eo = estimator_options(c);
  EXPECT_FALSE(eo.use_plane);
  EXPECT_EQ(eo.max_clones, 8);
}

TEST(Config, RoundTripsThroughJson) {
  RunConfig c;
  c.mode = ErrorMode::FullInvariant;
  c.sim.speed = 7.0;
  c.outlier_detection = false;
  const RunConfig back = parse_run_config(to_json(c));
  EXPECT_EQ(back.mode, c.mode);
  EXPECT_EQ(back.sim.speed, 7.0);
  EXPECT_FALSE(back.outlier_detection);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"sim": {"radus": 1}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"window": "eleven"})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"mode": "fancy"})")), ConfigError);
}

TEST(Config, ValidationCatchesBadValues) {
  RunConfig c;
  c.window = 1;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.sim.noise.sigma_px = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_NO_THROW(validate(RunConfig{}));
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, SimulateWritesLogsDeterministically) {
  const fs::path a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
  ASSERT_EQ(run_cli("simulate --duration 2 --seed 4 --out " + a.string()).code, 0);
  ASSERT_EQ(run_cli("simulate --duration 2 --seed 4 --out " + b.string()).code, 0);
  const std::string log = slurp(a / "measurements.log");
  EXPECT_EQ(log.rfind("# viwo-log v1\n", 0), 0u);
  EXPECT_EQ(count_prefix(log, "IMU "), 201);
  EXPECT_EQ(count_prefix(log, "WHEEL "), 201);
  EXPECT_EQ(count_prefix(log, "FRAME "), 21);
  EXPECT_EQ(count_prefix(log, "INIT "), 1);
  EXPECT_GT(count_prefix(log, "CAM "), 21 * 20);
  EXPECT_EQ(log, slurp(b / "measurements.log"));
  EXPECT_EQ(slurp(a / "ground_truth.txt").rfind("# viwo-gt v1\n", 0), 0u);
}

TEST(Cli, SimulateZeroDuration) {
  const fs::path dir = fresh_dir("sim_zero");
  ASSERT_EQ(run_cli("simulate --duration 0 --out " + dir.string()).code, 0);
  const std::string log = slurp(dir / "measurements.log");
  EXPECT_EQ(count_prefix(log, "IMU "), 0);
  EXPECT_EQ(count_prefix(log, "INIT "), 1);
  EXPECT_EQ(run_cli("run --out " + dir.string()).code, 0);
}

std::string noiseless_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "config.json";
  write_file(p, R"({"sim": {"add_noise": false)" + extra + "}}");
  return p.string();
}

TEST(Cli, RunOnNoiselessLogTracksTruth) {
  const fs::path dir = fresh_dir("run_clean");
  const std::string cfg = noiseless_config(dir);
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --duration 10 --out " + dir.string()).code, 0);
  for (const char* mode : {"standard", "invariant", "partial"}) {
    const CliResult r = run_cli(std::string("run --mode ") + mode + " --config " + cfg + " --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream traj(dir / "trajectory.csv");
    const auto rows = read_trajectory(traj);
    std::ifstream gt_in(dir / "ground_truth.txt");
    const TruthLog gt = read_ground_truth(gt_in);
    ASSERT_EQ(rows.size(), 101u);
    double worst = 0.0;
    for (const auto& row : rows) worst = std::max(worst, (row.state.pos - gt.at(row.t).pos).norm());
    EXPECT_LT(worst, 1e-5) << mode;
  }
}

std::vector<TrajectoryRow> trajectory(const fs::path& dir) {
  std::ifstream in(dir / "trajectory.csv");
  return read_trajectory(in);
}

TruthLog truth(const fs::path& dir) {
  std::ifstream in(dir / "ground_truth.txt");
  return read_ground_truth(in);
}

TEST(Cli, PlaneConstraintReducesHeightDrift) {
  const fs::path dir = fresh_dir("plane_ab");
  ASSERT_EQ(run_cli("simulate --duration 30 --seed 3 --out " + dir.string()).code, 0);
  const TruthLog gt = truth(dir);
  auto max_dz = [&](const std::string& flags) {
    const CliResult r = run_cli("run " + flags + " --out " + dir.string());
    EXPECT_EQ(r.code, 0) << r.output;
    double worst = 0.0;
    for (const auto& row : trajectory(dir)) worst = std::max(worst, std::abs(row.state.pos.z() - gt.at(row.t).pos.z()));
    return worst;
  };
  const double with = max_dz("");
  const double without = max_dz("--no-plane");
  EXPECT_LT(with, without);
}

TEST(Cli, FullFilterBeatsNaiveWithMovingLandmarks) {
  // Long straight-ish drive past a dense landmark band with slow movers mixed in.
  const fs::path dir = fresh_dir("moving_ab");
  const fs::path cfg = dir / "config.json";
  write_file(cfg, R"({"sim": {"radius": 500, "n_landmarks": 4000, "ring_offset": 0.02,)"
                  R"( "n_moving_landmarks": 200, "moving_speed": 1.5}})");
  double full = 0.0, naive = 0.0;
  for (int seed = 1; seed <= 4; ++seed) {
    const std::string common = "--config " + cfg.string() + " --seed " + std::to_string(seed) + " --duration 30 --out " +
                               dir.string();
    ASSERT_EQ(run_cli("simulate " + common).code, 0);
    const TruthLog gt = truth(dir);
    auto final_error = [&](const std::string& flags) {
      const CliResult r = run_cli("run " + flags + " " + common);
      EXPECT_EQ(r.code, 0) << r.output;
      const auto rows = trajectory(dir);
      return (rows.back().state.pos - gt.at(rows.back().t).pos).norm();
    };
    full += final_error("");
    naive += final_error("--no-outlier-detection --no-plane");
  }
  EXPECT_LT(full, naive);
}

TEST(Cli, UnknownConfigKeyIsAConfigError) {
  const fs::path dir = fresh_dir("bad_cfg");
  write_file(dir / "c.json", R"({"sim": {"wobble": 3}})");
  const CliResult r = run_cli("simulate --config " + (dir / "c.json").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("wobble"), std::string::npos) << r.output;
}

TEST(Cli, BadModeIsAConfigError) {
  EXPECT_EQ(run_cli("simulate --mode fancy --out " + fresh_dir("bad_mode").string()).code, 2);
}

TEST(Cli, MalformedLogReportsLine) {
  const fs::path dir = fresh_dir("bad_log");
  write_file(dir / "measurements.log",
             "# viwo-log v1\nINIT 0 1 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\nIMU 0 0 0 0 0 0 9.81\nWHEEL 0.01 0.2\n");
  const CliResult r = run_cli("run --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 4"), std::string::npos) << r.output;
}

TEST(Cli, HeaderMismatchIsRejected) {
  const fs::path dir = fresh_dir("bad_header");
  write_file(dir / "measurements.log", "viwo log\n");
  const CliResult r = run_cli("run --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 1"), std::string::npos) << r.output;
}

TEST(Cli, MissingLogIsAnIoError) {
  EXPECT_EQ(run_cli("run --out " + fresh_dir("missing").string()).code, 5);
}

TEST(Cli, JacobianCheckPasses) {
  const CliResult r = run_cli("jacobian-check --trials 5");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(r.output.find("FAIL"), std::string::npos);
  EXPECT_NE(r.output.find("wheel velocity"), std::string::npos);
}

TEST(Cli, SingleRunMonteCarlo) {
  const fs::path dir = fresh_dir("mc");
  const CliResult r = run_cli("mc --runs 1 --duration 5 --mode partial --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("low confidence"), std::string::npos);
  const std::string csv = slurp(dir / "eval.csv");
  EXPECT_EQ(csv.rfind("# viwo-eval v1\ntime,mode,metric,value\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
}

TEST(Cli, OutlierSweepRuns) {
  const CliResult r = run_cli("outliers --trials 2");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("omega0"), std::string::npos);
}

TEST(Cli, RequiresASubcommand) { EXPECT_EQ(run_cli("").code, 2); }

}  // namespace
}  // namespace viwo
