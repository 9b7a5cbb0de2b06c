#include <gtest/gtest.h>

#include "viwo/evaluation.hpp"
#include "viwo/lie.hpp"
#include "viwo/retraction.hpp"

#include <Eigen/Cholesky>

#include <random>
#include <sstream>

namespace viwo {
namespace {

TEST(PoseError, RotationAndPosition) {
  ImuState est;
  est.rot = rot_z(0.1);
  est.pos = Vector3d(1, 2, 3);
  const PoseError e = pose_error(est, Matrix3d::Identity(), Vector3d(1, 2, 2.5));
  EXPECT_LT((e.rot - Vector3d(0, 0, 0.1)).norm(), 1e-15);
  EXPECT_LT((e.pos - Vector3d(0, 0, 0.5)).norm(), 1e-15);
}

TEST(NeesError, InvertsTheRetraction) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.2);
  for (ErrorMode mode : kAllModes) {
    for (int i = 0; i < 20; ++i) {
      ImuState est;
      est.rot = so3_exp(Vector3d(g(rng), g(rng), 5 * g(rng)));
      est.pos = Vector3d(10 * g(rng), 10 * g(rng), g(rng));
      Vector15d xi = Vector15d::Zero();
      xi.head<3>() = Vector3d(g(rng), g(rng), g(rng));
      xi.segment<3>(kPosIdx) = Vector3d(g(rng), g(rng), g(rng));
      const ImuState truth = retract(est, xi, mode);
      const PoseError e = nees_error(est, truth.rot, truth.pos, mode);
      EXPECT_LT((e.rot - xi.head<3>()).norm(), 1e-12);
      EXPECT_LT((e.pos - xi.segment<3>(kPosIdx)).norm(), 1e-12);
    }
  }
}

TEST(Nees, HandExample) {
  const Vector3d e(1, 2, 0);
  const Matrix3d P = Vector3d(1, 4, 1).asDiagonal();
  EXPECT_NEAR(*nees(e, P), 2.0, 1e-14);
}

TEST(Nees, InvalidCovariances) {
  EXPECT_FALSE(nees(Vector3d::Ones(), Matrix3d::Zero()).has_value());
  EXPECT_FALSE(nees(Vector3d::Ones(), Matrix3d(Vector3d(1, 1, -1).asDiagonal())).has_value());
  EXPECT_FALSE(nees(Vector3d::Ones(), Matrix3d(Vector3d(1, 1, 1e-13).asDiagonal())).has_value());
  EXPECT_TRUE(nees(Vector3d::Ones(), Matrix3d(Vector3d(1, 1, 1e-11).asDiagonal())).has_value());
  EXPECT_FALSE(nees(Vector2d::Ones(), Matrix3d::Identity()).has_value());
}

TEST(Nees, GaussianDrawsAverageToTheDimension) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix3d A;
  A << 2, 0.3, -0.1, 0.0, 0.5, 0.2, 0.0, 0.0, 0.05;
  const Matrix3d P = A * A.transpose();
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = g(rng), b = g(rng), c = g(rng);
    sum += *nees(Vector3d(A * Vector3d(a, b, c)), P);
  }
  // Standard error of the mean is sqrt(6 / n) ~ 0.008.
  EXPECT_NEAR(sum / n, 3.0, 0.04);
}

TEST(AverageNees, SkipsInvalidEntries) {
  const std::vector<std::vector<std::optional<double>>> runs{{1.0, std::nullopt, 3.0}, {3.0, 4.0}};
  const auto avg = average_nees(runs);
  ASSERT_EQ(avg.size(), 3u);
  EXPECT_DOUBLE_EQ(*avg[0], 2.0);
  EXPECT_DOUBLE_EQ(*avg[1], 4.0);
  EXPECT_DOUBLE_EQ(*avg[2], 3.0);
  const auto none = average_nees({{std::nullopt}, {std::nullopt}});
  EXPECT_FALSE(none[0].has_value());
}

TEST(DetectorMetrics, Rates) {
  const std::vector<FeatureId> dyn{1, 2, 3, 4}, stat{10, 11, 12, 13, 14};
  const std::vector<FeatureId> flagged{1, 2, 3, 10};
  const DetectorRates r = detector_metrics(dyn, stat, flagged);
  EXPECT_DOUBLE_EQ(*r.tpr, 0.75);
  EXPECT_DOUBLE_EQ(*r.fpr, 0.2);
  const DetectorRates empty = detector_metrics({}, stat, flagged);
  EXPECT_FALSE(empty.tpr.has_value());
}

TEST(NeesConvention, MentionsTheJacobianOnlyForFull) {
  EXPECT_NE(nees_convention(ErrorMode::FullInvariant).find("Jl"), std::string::npos);
  EXPECT_EQ(nees_convention(ErrorMode::PartialInvariant).find("Jl"), std::string::npos);
}

TEST(ToyHarness, IsConsistent) {
  const ToyHarnessResult r = run_toy_harness(50, 200, 1);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.anees.size(), 200u);
  EXPECT_GT(r.mean_anees, r.lower);
  EXPECT_LT(r.mean_anees, r.upper);
  EXPECT_NEAR(r.mean_anees, 2.0, 0.2);
  EXPECT_GE(r.fraction_inside, 0.95);
}

SimConfig quick_config(bool noise, double duration = 8.0) {
  SimConfig cfg;
  cfg.duration = duration;
  cfg.add_noise = noise;
  return cfg;
}

TEST(RunFilter, ZeroNoiseTracksTruth) {
  const SimConfig cfg = quick_config(false);
  const GroundTruth gt = generate_trajectory(cfg);
  const MeasurementStream s = synthesize_measurements(cfg, gt, generate_landmarks(cfg));
  for (ErrorMode mode : kAllModes) {
    EstimatorOptions eo;
    eo.mode = mode;
    InitialPrior prior;
    prior.perturb = false;
    const RunResult r = run_filter(gt, s, eo, prior, 1);
    ASSERT_FALSE(r.diverged);
    ASSERT_EQ(r.frames.size(), s.frames.size());
    EXPECT_LT(r.frames.back().error.pos.norm(), 1e-6) << to_string(mode);
    EXPECT_LT(r.frames.back().error.rot.norm(), 1e-7) << to_string(mode);
    EXPECT_GT(r.stats.visual_updates, 0);
  }
}

TEST(RunFilter, IsRepeatable) {
  const SimConfig cfg = quick_config(true, 4.0);
  const GroundTruth gt = generate_trajectory(cfg);
  const MeasurementStream s = synthesize_measurements(cfg, gt, generate_landmarks(cfg), 9);
  const MeasurementStream copy = s;
  EstimatorOptions eo;
  const RunResult a = run_filter(gt, s, eo, InitialPrior{}, 5);
  const RunResult b = run_filter(gt, s, eo, InitialPrior{}, 5);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    EXPECT_EQ(a.frames[k].est.pos, b.frames[k].est.pos);
    EXPECT_EQ(a.frames[k].est.rot, b.frames[k].est.rot);
  }
  EXPECT_EQ(s.imu.back().omega, copy.imu.back().omega);
  EXPECT_EQ(s.frames.back().features.size(), copy.frames.back().features.size());
}

TEST(RunFilter, FlagsDivergence) {
  const SimConfig cfg = quick_config(true, 4.0);
  const GroundTruth gt = generate_trajectory(cfg);
  const MeasurementStream s = synthesize_measurements(cfg, gt, generate_landmarks(cfg));
  const RunResult r = run_filter(gt, s, EstimatorOptions{}, InitialPrior{}, 1, 1e-9);
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.frames.size(), s.frames.size());
}

TEST(MonteCarlo, ZeroNoiseSingleRunIsLowConfidence) {
  MonteCarloOptions mc;
  mc.n_runs = 1;
  const EvalReport report = run_monte_carlo(quick_config(false, 5.0), mc);
  EXPECT_TRUE(report.low_confidence);
  ASSERT_EQ(report.modes.size(), 3u);
  EXPECT_EQ(report.time.size(), 51u);
  for (const auto& m : report.modes) {
    EXPECT_EQ(m.included, 1);
    EXPECT_LT(m.final_rmse_pos, 1e-6);
    EXPECT_LT(m.overall_rmse_rot, 1e-7);
    EXPECT_GT(m.realtime_factor, 1.0);
  }
}

TEST(MonteCarlo, ReportsAndCsv) {
  MonteCarloOptions mc;
  mc.n_runs = 2;
  mc.modes = {ErrorMode::PartialInvariant};
  const EvalReport report = run_monte_carlo(quick_config(true, 5.0), mc);
  EXPECT_FALSE(report.low_confidence);
  ASSERT_EQ(report.modes.size(), 1u);
  const ModeReport& m = report.modes[0];
  EXPECT_EQ(m.included, 2);
  EXPECT_EQ(m.rmse_pos.size(), report.time.size());
  EXPECT_LT(m.final_rmse_pos, 1.0);

  std::ostringstream csv;
  write_eval_csv(csv, report);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# viwo-eval v1");
  std::getline(in, line);
  EXPECT_EQ(line, "time,mode,metric,value");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("0,partial,rmse_rot_deg,", 0), 0u) << line;

  std::ostringstream summary;
  write_summary(summary, report);
  EXPECT_NE(summary.str().find("[partial]"), std::string::npos);
  EXPECT_NE(summary.str().find("realtime_factor"), std::string::npos);
}

TEST(MonteCarlo, RejectsZeroRuns) {
  MonteCarloOptions mc;
  mc.n_runs = 0;
  EXPECT_THROW(run_monte_carlo(quick_config(false, 1.0), mc), std::invalid_argument);
}

TEST(DetectorSweep, ShapeOfTheResult) {
  SimConfig cfg;
  const double omegas[] = {0.0, 0.2};
  const auto rows = run_detector_sweep(cfg, omegas, 3, 1);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].omega0, 0.2);
  for (const auto& r : rows) {
    EXPECT_GE(r.tpr, 0.0);
    EXPECT_LE(r.fpr, 1.0);
    EXPECT_GT(r.mean_features, 50.0);
  }
}

}  // namespace
}  // namespace viwo
