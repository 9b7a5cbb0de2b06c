#include "viwo/evaluation.hpp"

#include "viwo/lie.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <set>
#include <stdexcept>

namespace viwo {

PoseError pose_error(const ImuState& est, const Matrix3d& R_gt, const Vector3d& p_gt) {
  return {so3_log(Matrix3d(est.rot * R_gt.transpose())), est.pos - p_gt};
}

PoseError nees_error(const ImuState& est, const Matrix3d& R_gt, const Vector3d& p_gt, ErrorMode mode) {
  PoseError e;
  e.rot = so3_log(Matrix3d(R_gt * est.rot.transpose()));
  if (mode == ErrorMode::FullInvariant) {
    e.pos = left_jacobian_inverse(e.rot) * (p_gt - so3_exp(e.rot) * est.pos);
  } else {
    e.pos = p_gt - est.pos;
  }
  return e;
}

std::optional<double> nees(const VectorXd& e, const MatrixXd& P, double max_condition) {
  if (e.size() != P.rows() || P.rows() != P.cols() || e.size() == 0) return std::nullopt;
  const MatrixXd sym = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > max_condition) return std::nullopt;
  const VectorXd y = es.eigenvectors().transpose() * e;
  return (y.array().square() / es.eigenvalues().array()).sum();
}

std::vector<std::optional<double>> average_nees(const std::vector<std::vector<std::optional<double>>>& runs) {
  std::size_t steps = 0;
  for (const auto& r : runs) steps = std::max(steps, r.size());
  std::vector<std::optional<double>> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : runs) {
      if (k < r.size() && r[k]) {
        sum += *r[k];
        ++count;
      }
    }
    if (count > 0) out[k] = sum / count;
  }
  return out;
}

DetectorRates detector_metrics(std::span<const FeatureId> dynamic_ids, std::span<const FeatureId> static_ids,
                               std::span<const FeatureId> flagged) {
  const std::set<FeatureId> f(flagged.begin(), flagged.end());
  auto rate = [&](std::span<const FeatureId> ids) -> std::optional<double> {
    if (ids.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (FeatureId id : ids) hits += f.count(id);
    return static_cast<double>(hits) / static_cast<double>(ids.size());
  };
  return {rate(dynamic_ids), rate(static_ids)};
}

std::string nees_convention(ErrorMode mode) {
  switch (mode) {
    case ErrorMode::Standard:
      return "rot=log(R_gt R_est^T) pos=p_gt-p_est";
    case ErrorMode::FullInvariant:
      return "rot=log(R_gt R_est^T) pos=Jl(rot)^-1 (p_gt-exp(rot) p_est)";
    case ErrorMode::PartialInvariant:
      return "rot=log(R_gt R_est^T) pos=p_gt-p_est";
  }
  return {};
}

Estimator make_estimator(const MeasurementStream& stream, const EstimatorOptions& options, const InitialPrior& prior,
                         std::uint64_t seed) {
  MatrixXd cov = MatrixXd::Zero(kImuErrorDim, kImuErrorDim);
  cov.block<3, 3>(kVelIdx, kVelIdx).diagonal().setConstant(prior.sigma_vel * prior.sigma_vel);
  cov.block<3, 3>(kBgIdx, kBgIdx).diagonal().setConstant(prior.sigma_bg * prior.sigma_bg);
  cov.block<3, 3>(kBaIdx, kBaIdx).diagonal().setConstant(prior.sigma_ba * prior.sigma_ba);

  ImuState init = stream.initial;
  if (prior.perturb) {
    auto rng = make_rng(seed, 3);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double sigma) -> Vector3d {
      const double x = unit(rng), y = unit(rng), z = unit(rng);
      return Vector3d(x, y, z) * sigma;
    };
    init.vel += draw(prior.sigma_vel);
    init.bg += draw(prior.sigma_bg);
    init.ba += draw(prior.sigma_ba);
  }
  return Estimator(options, init, cov, 0.0);
}

RunResult run_filter(const GroundTruth& gt, const MeasurementStream& stream, const EstimatorOptions& options,
                     const InitialPrior& prior, std::uint64_t seed, double divergence_threshold) {
  RunResult result;
  result.mode = options.mode;
  Estimator estimator = make_estimator(stream, options, prior, seed);
  result.frames.reserve(stream.frames.size());

  using Clock = std::chrono::steady_clock;
  Clock::duration busy{};
  std::size_t i = 0, w = 0;
  for (const auto& frame : stream.frames) {
    const auto start = Clock::now();
    while (true) {
      const bool imu_ready = i < stream.imu.size() && stream.imu[i].stamp <= frame.stamp;
      const bool wheel_ready = w < stream.wheel.size() && stream.wheel[w].stamp <= frame.stamp;
      if (!imu_ready && !wheel_ready) break;
      if (imu_ready && (!wheel_ready || stream.imu[i].stamp <= stream.wheel[w].stamp)) {
        estimator.add_imu(stream.imu[i++]);
      } else {
        estimator.add_wheel(stream.wheel[w++]);
      }
    }
    estimator.add_frame(frame);
    busy += Clock::now() - start;

    const FilterState& s = estimator.state();
    const TruthSample truth = gt.at(frame.stamp);
    FrameRecord rec;
    rec.stamp = frame.stamp;
    rec.est = s.imu;
    rec.cov_diag = s.cov.diagonal().head(kImuErrorDim);
    rec.error = pose_error(s.imu, truth.rot, truth.pos);
    const PoseError ne = nees_error(s.imu, truth.rot, truth.pos, s.mode);
    rec.nees_rot = nees(ne.rot, s.cov.block<3, 3>(kRotIdx, kRotIdx));
    rec.nees_pos = nees(ne.pos, s.cov.block<3, 3>(kPosIdx, kPosIdx));
    const bool finite = s.imu.pos.allFinite() && s.imu.rot.allFinite();
    result.frames.push_back(std::move(rec));
    if (!finite || result.frames.back().error.pos.norm() > divergence_threshold) {
      result.diverged = true;
      break;
    }
  }
  result.backend_seconds = std::chrono::duration<double>(busy).count();
  result.stats = estimator.stats();
  return result;
}

namespace {

double time_average_abs_dev(const std::vector<std::optional<double>>& series, double target) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : series) {
    if (!v) continue;
    sum += std::abs(*v - target);
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace

EvalReport run_monte_carlo(const SimConfig& cfg, const MonteCarloOptions& options) {
  if (options.n_runs < 1) throw std::invalid_argument("run_monte_carlo: need at least one run");
  const GroundTruth gt = generate_trajectory(cfg);
  const std::vector<Landmark> landmarks = generate_landmarks(cfg);

  EvalReport report;
  report.n_runs = options.n_runs;
  report.low_confidence = options.n_runs < 2;
  const std::size_t n_modes = options.modes.size();
  std::vector<std::vector<RunResult>> results(n_modes);

  for (int run = 0; run < options.n_runs; ++run) {
    const std::uint64_t noise_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(run) + 1;
    const MeasurementStream stream = synthesize_measurements(cfg, gt, landmarks, noise_seed);
    InitialPrior prior = options.prior;
    prior.perturb = prior.perturb && cfg.add_noise;
    for (std::size_t m = 0; m < n_modes; ++m) {
      EstimatorOptions eo = options.estimator;
      eo.mode = options.modes[m];
      eo.noise = cfg.noise;
      eo.intrinsics = cfg.intrinsics;
      eo.camera = cfg.camera;
      eo.wheel = cfg.wheel;
      eo.wheel_rate = cfg.wheel_rate;
      results[m].push_back(run_filter(gt, stream, eo, prior, noise_seed, options.divergence_threshold));
    }
    if (run == 0) {
      for (const auto& rec : results[0].front().frames) report.time.push_back(rec.stamp);
    }
  }
  if (report.time.empty()) {
    // Every first-run filter diverged immediately; fall back to the frame stamps.
    const auto n_cam = static_cast<long>(std::floor(cfg.duration * cfg.cam_rate + 1e-9));
    for (long k = 0; k <= n_cam; ++k) report.time.push_back(static_cast<double>(k) / cfg.cam_rate);
  }
  const std::size_t steps = report.time.size();

  for (std::size_t m = 0; m < n_modes; ++m) {
    ModeReport mr;
    mr.mode = options.modes[m];
    mr.attempted = options.n_runs;
    std::vector<std::vector<std::optional<double>>> nrot, npos;
    std::vector<double> sum_rot(steps, 0.0), sum_pos(steps, 0.0);
    double all_rot = 0.0, all_pos = 0.0;
    long all_n = 0;
    double busy = 0.0;
    long frames = 0;
    for (const auto& r : results[m]) {
      busy += r.backend_seconds;
      frames += static_cast<long>(r.frames.size());
      if (r.diverged || r.frames.size() != steps) continue;
      ++mr.included;
      std::vector<std::optional<double>> a, b;
      for (std::size_t k = 0; k < steps; ++k) {
        const auto& rec = r.frames[k];
        sum_rot[k] += rec.error.rot.squaredNorm();
        sum_pos[k] += rec.error.pos.squaredNorm();
        all_rot += rec.error.rot.squaredNorm();
        all_pos += rec.error.pos.squaredNorm();
        ++all_n;
        a.push_back(rec.nees_rot);
        b.push_back(rec.nees_pos);
      }
      nrot.push_back(std::move(a));
      npos.push_back(std::move(b));
    }
    const double inc = std::max(mr.included, 1);
    for (std::size_t k = 0; k < steps; ++k) {
      mr.rmse_rot.push_back(std::sqrt(sum_rot[k] / inc));
      mr.rmse_pos.push_back(std::sqrt(sum_pos[k] / inc));
    }
    mr.anees_rot = average_nees(nrot);
    mr.anees_pos = average_nees(npos);
    mr.anees_rot.resize(steps);
    mr.anees_pos.resize(steps);
    if (mr.included > 0 && steps > 0) {
      mr.final_rmse_rot = mr.rmse_rot.back();
      mr.final_rmse_pos = mr.rmse_pos.back();
      mr.overall_rmse_rot = std::sqrt(all_rot / static_cast<double>(all_n));
      mr.overall_rmse_pos = std::sqrt(all_pos / static_cast<double>(all_n));
    }
    mr.mean_abs_anees_dev_rot = time_average_abs_dev(mr.anees_rot, 3.0);
    mr.mean_abs_anees_dev_pos = time_average_abs_dev(mr.anees_pos, 3.0);
    bool first = true;
    for (const auto& v : mr.anees_pos) {
      if (!v) continue;
      mr.min_anees_pos = first ? *v : std::min(mr.min_anees_pos, *v);
      mr.max_anees_pos = first ? *v : std::max(mr.max_anees_pos, *v);
      first = false;
    }
    mr.backend_ms_per_frame = frames ? 1e3 * busy / static_cast<double>(frames) : 0.0;
    const double simulated = static_cast<double>(frames) / cfg.cam_rate;
    mr.realtime_factor = busy > 0.0 ? simulated / busy : 0.0;
    report.modes.push_back(std::move(mr));
  }
  return report;
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << "# viwo-eval v1\n";
  os << "time,mode,metric,value\n";
  os << std::setprecision(10);
  for (const auto& mr : report.modes) {
    const std::string mode(to_string(mr.mode));
    for (std::size_t k = 0; k < report.time.size(); ++k) {
      const double t = report.time[k];
      os << t << ',' << mode << ",rmse_rot_deg," << mr.rmse_rot[k] * 180.0 / std::numbers::pi << '\n';
      os << t << ',' << mode << ",rmse_pos_m," << mr.rmse_pos[k] << '\n';
      if (mr.anees_rot[k]) os << t << ',' << mode << ",anees_rot," << *mr.anees_rot[k] << '\n';
      if (mr.anees_pos[k]) os << t << ',' << mode << ",anees_pos," << *mr.anees_pos[k] << '\n';
    }
  }
}

void write_summary(std::ostream& os, const EvalReport& report) {
  os << "runs: " << report.n_runs << (report.low_confidence ? " (low confidence: single run)" : "") << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& mr : report.modes) {
    os << "\n[" << to_string(mr.mode) << "]\n";
    os << "runs_attempted: " << mr.attempted << '\n';
    os << "runs_included: " << mr.included << '\n';
    os << "nees_error: " << nees_convention(mr.mode) << '\n';
    os << "final_rmse_pos_m: " << mr.final_rmse_pos << '\n';
    os << "final_rmse_rot_deg: " << mr.final_rmse_rot * 180.0 / std::numbers::pi << '\n';
    os << "overall_rmse_pos_m: " << mr.overall_rmse_pos << '\n';
    os << "overall_rmse_rot_deg: " << mr.overall_rmse_rot * 180.0 / std::numbers::pi << '\n';
    os << "mean_abs_anees_dev_pos: " << mr.mean_abs_anees_dev_pos << '\n';
    os << "mean_abs_anees_dev_rot: " << mr.mean_abs_anees_dev_rot << '\n';
    os << "anees_pos_range: [" << mr.min_anees_pos << ", " << mr.max_anees_pos << "]\n";
    os << "backend_ms_per_frame: " << mr.backend_ms_per_frame << '\n';
    os << "realtime_factor: " << mr.realtime_factor << '\n';
  }
}

std::vector<DetectorSweepRow> run_detector_sweep(const SimConfig& cfg, std::span<const double> omegas, int n_seeds,
                                                 std::uint64_t seed) {
  std::vector<DetectorSweepRow> rows;
  SimConfig c = cfg;
  if (!c.dynamic) c.dynamic = DynamicSceneConfig{};
  OutlierDetectorOptions opts;
  opts.omega_max = INFINITY;
  for (double w : omegas) {
    c.dynamic->omega0 = w;
    DetectorSweepRow row;
    row.omega0 = w;
    int n_tpr = 0, n_fpr = 0;
    for (int k = 0; k < n_seeds; ++k) {
      const DynamicScene scene = synthesize_dynamic_scene(c, seed + static_cast<std::uint64_t>(k));
      const auto det = detect_outliers(scene.pairs, scene.R_GC, scene.v_C, scene.omega, scene.dt, opts);
      const DetectorRates rates = detector_metrics(scene.dynamic_ids, scene.static_ids, det.flagged);
      if (rates.tpr) {
        row.tpr += *rates.tpr;
        ++n_tpr;
      }
      if (rates.fpr) {
        row.fpr += *rates.fpr;
        ++n_fpr;
      }
      row.mean_features += static_cast<double>(scene.pairs.size());
    }
    row.tpr = n_tpr ? row.tpr / n_tpr : 0.0;
    row.fpr = n_fpr ? row.fpr / n_fpr : 0.0;
    row.mean_features /= std::max(n_seeds, 1);
    rows.push_back(row);
  }
  return rows;
}

ToyHarnessResult run_toy_harness(int n_runs, int n_steps, std::uint64_t seed) {
  const double dt = 0.1;
  const double q = 0.5;
  const double r = 0.25;
  Eigen::Matrix2d F;
  F << 1.0, dt, 0.0, 1.0;
  Eigen::Matrix2d Q;
  Q << q * dt * dt * dt / 3.0, q * dt * dt / 2.0, q * dt * dt / 2.0, q * dt;
  const Eigen::RowVector2d H(1.0, 0.0);
  const Eigen::Matrix2d P0 = Eigen::Vector2d(1.0, 0.5).asDiagonal();
  const Eigen::LLT<Eigen::Matrix2d> q_chol(Q);
  const Eigen::LLT<Eigen::Matrix2d> p_chol(P0);

  std::vector<std::vector<std::optional<double>>> runs;
  for (int run = 0; run < n_runs; ++run) {
    auto rng = make_rng(seed, 100 + static_cast<std::uint64_t>(run));
    std::normal_distribution<double> unit(0.0, 1.0);
    auto draw2 = [&]() {
      const double a = unit(rng);
      const double b = unit(rng);
      return Eigen::Vector2d(a, b);
    };
    Eigen::Vector2d x(0.0, 1.0);
    Eigen::Vector2d xh = x + p_chol.matrixL() * draw2();
    Eigen::Matrix2d P = P0;
    std::vector<std::optional<double>> series;
    for (int k = 0; k < n_steps; ++k) {
      x = F * x + q_chol.matrixL() * draw2();
      xh = F * xh;
      P = F * P * F.transpose() + Q;
      const double z = H * x + std::sqrt(r) * unit(rng);
      const double S = H * P * H.transpose() + r;
      const Eigen::Vector2d K = P * H.transpose() / S;
      xh += K * (z - H * xh);
      const Eigen::Matrix2d I_KH = Eigen::Matrix2d::Identity() - K * H;
      P = I_KH * P * I_KH.transpose() + K * r * K.transpose();
      series.push_back(nees(VectorXd(x - xh), MatrixXd(P)));
    }
    runs.push_back(std::move(series));
  }

  ToyHarnessResult out;
  boost::math::chi_squared dist(2.0 * n_runs);
  out.lower = boost::math::quantile(dist, 0.005) / n_runs;
  out.upper = boost::math::quantile(dist, 0.995) / n_runs;
  int inside = 0;
  double sum = 0.0;
  for (const auto& v : average_nees(runs)) {
    const double a = v.value_or(0.0);
    out.anees.push_back(a);
    sum += a;
    if (a >= out.lower && a <= out.upper) ++inside;
  }
  const double steps = std::max<double>(static_cast<double>(out.anees.size()), 1.0);
  out.mean_anees = sum / steps;
  out.fraction_inside = inside / steps;
  out.passed = out.mean_anees >= out.lower && out.mean_anees <= out.upper && out.fraction_inside >= 0.95;
  return out;
}

}  // namespace viwo
