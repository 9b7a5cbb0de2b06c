#include "viwo/config.hpp"
#include "viwo/estimator.hpp"
#include "viwo/evaluation.hpp"
#include "viwo/jacobian_check.hpp"
#include "viwo/lie.hpp"
#include "viwo/log_io.hpp"
#include "viwo/simulator.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace viwo;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDiverged = 3, kJacobianFailure = 4, kIoError = 5 };

struct Flags {
  std::string config;
  std::string mode;
  int runs = 0;
  long long seed = -1;
  std::string out;
  bool no_plane = false;
  bool no_outlier = false;
  bool no_wheel = false;
  double duration = -1.0;
  std::string log;
  std::string truth;
  int trials = 50;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.mode.empty()) {
    const auto m = parse_error_mode(f.mode);
    if (!m) throw ConfigError("unknown mode '" + f.mode + "'");
    cfg.mode = *m;
  }
  if (f.runs > 0) cfg.runs = f.runs;
  if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
  cfg.sim.seed = cfg.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.no_plane) cfg.plane = false;
  if (f.no_outlier) cfg.outlier_detection = false;
  if (f.no_wheel) cfg.wheel_rotation = cfg.wheel_velocity = false;
  if (f.duration >= 0.0) cfg.sim.duration = f.duration;
  validate(cfg);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return os;
}

int cmd_simulate(const RunConfig& cfg) {
  const GroundTruth gt = generate_trajectory(cfg.sim);
  const auto landmarks = generate_landmarks(cfg.sim);
  const MeasurementStream stream = synthesize_measurements(cfg.sim, gt, landmarks);
  const fs::path dir(cfg.output_dir);
  auto log = open_out(dir / "measurements.log");
  write_log(log, stream);
  auto truth = open_out(dir / "ground_truth.txt");
  write_ground_truth(truth, gt, stream);
  std::cout << "wrote " << stream.imu.size() << " IMU, " << stream.wheel.size() << " wheel and "
            << stream.frames.size() << " camera records to " << (dir / "measurements.log").string() << '\n';
  return kOk;
}

int cmd_run(const RunConfig& cfg, const Flags& flags) {
  const fs::path dir(cfg.output_dir);
  const fs::path log_path = flags.log.empty() ? dir / "measurements.log" : fs::path(flags.log);
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot open log '" + log_path.string() + "'");
  const MeasurementStream stream = read_log(in);

  std::optional<TruthLog> truth;
  const fs::path truth_path = flags.truth.empty() ? log_path.parent_path() / "ground_truth.txt" : fs::path(flags.truth);
  if (std::ifstream tin(truth_path); tin) truth = read_ground_truth(tin);

  InitialPrior prior;
  prior.perturb = false;
  Estimator estimator = make_estimator(stream, estimator_options(cfg), prior, cfg.seed);
  auto out = open_out(dir / "trajectory.csv");
  write_trajectory_header(out);
  bool diverged = false;
  replay(estimator, stream, [&](const CameraFrame& frame) {
    const FilterState& s = estimator.state();
    write_trajectory_row(out, frame.stamp, s);
    if (!s.imu.pos.allFinite() || !s.imu.rot.allFinite()) diverged = true;
    if (truth && (s.imu.pos - truth->at(frame.stamp).pos).norm() > 100.0) diverged = true;
  });
  const EstimatorStats& st = estimator.stats();
  std::cout << "mode " << to_string(cfg.mode) << ": " << st.frames << " frames, " << st.visual_updates
            << " visual updates (" << st.features_used << " features, " << st.features_gated << " gated), "
            << st.outliers_flagged << " flagged dynamic\n";
  if (diverged) {
    std::cerr << "filter diverged\n";
    return kDiverged;
  }
  return kOk;
}

int cmd_mc(const RunConfig& cfg, const Flags& flags) {
  MonteCarloOptions mc;
  mc.n_runs = cfg.runs;
  if (!flags.mode.empty()) mc.modes = {cfg.mode};
  mc.estimator = estimator_options(cfg);
  const EvalReport report = run_monte_carlo(cfg.sim, mc);
  const fs::path dir(cfg.output_dir);
  auto csv = open_out(dir / "eval.csv");
  write_eval_csv(csv, report);
  auto summary = open_out(dir / "summary.txt");
  write_summary(summary, report);
  write_summary(std::cout, report);
  for (const auto& m : report.modes) {
    if (m.included == 0) return kDiverged;
  }
  return kOk;
}

int cmd_jacobian_check(const RunConfig& cfg, const Flags& flags) {
  const auto rows = run_jacobian_check(default_jacobian_cases(), cfg.seed, flags.trials);
  bool ok = true;
  std::cout << std::left << std::setw(24) << "jacobian" << std::setw(18) << "mode" << std::setw(14)
            << "max rel err" << "result\n";
  for (const auto& r : rows) {
    std::cout << std::setw(24) << r.name << std::setw(18) << to_string(r.mode) << std::setw(14) << std::scientific
              << std::setprecision(2) << r.max_rel_error << (r.pass ? "pass" : "FAIL") << '\n';
    ok = ok && r.pass;
  }
  std::cout << "wheel velocity: full 3-row residual [v,0,0]; no e3^T row selection on the Jacobian\n";
  return ok ? kOk : kJacobianFailure;
}

int cmd_outliers(const RunConfig& cfg, const Flags& flags) {
  SimConfig sim = cfg.sim;
  if (!sim.dynamic) sim.dynamic = DynamicSceneConfig{};
  const double omegas[] = {0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
  const auto rows = run_detector_sweep(sim, omegas, flags.trials, cfg.seed);
  std::cout << "omega0   tpr     fpr     features\n" << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    std::cout << r.omega0 << "    " << r.tpr << "   " << r.fpr << "   " << r.mean_features << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-inertial-wheel odometry filters and simulation harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON configuration file");
  app.add_option("--mode", f.mode, "standard | invariant | partial");
  app.add_option("--runs", f.runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
  app.add_option("--seed", f.seed, "random seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--no-plane", f.no_plane, "disable plane constraints");
  app.add_flag("--no-outlier-detection", f.no_outlier, "disable dynamic feature detection");
  app.add_flag("--no-wheel", f.no_wheel, "disable wheel updates");
  app.add_option("--duration", f.duration, "simulated seconds")->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "write a simulated measurement log and ground truth");
  auto* run = app.add_subcommand("run", "run the filter on a measurement log");
  run->add_option("--log", f.log, "measurement log (default OUT/measurements.log)");
  run->add_option("--truth", f.truth, "ground truth for the divergence check");
  auto* mc = app.add_subcommand("mc", "Monte Carlo comparison of the error modes");
  auto* jac = app.add_subcommand("jacobian-check", "compare analytic Jacobians with finite differences");
  jac->add_option("--trials", f.trials, "random states per Jacobian")->check(CLI::PositiveNumber);
  auto* outliers = app.add_subcommand("outliers", "dynamic-feature detector rates versus turn rate");
  outliers->add_option("--trials", f.trials, "seeds per turn rate")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  RunConfig cfg;
  try {
    cfg = resolve(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(cfg);
    if (*run) return cmd_run(cfg, f);
    if (*mc) return cmd_mc(cfg, f);
    if (*jac) return cmd_jacobian_check(cfg, f);
    if (*outliers) return cmd_outliers(cfg, f);
  } catch (const ParseError& e) {
    std::cerr << "log error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kOk;
}
