#include "viwo/visual.hpp"

#include "viwo/chi2.hpp"
#include "viwo/lie.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace viwo {

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vector3d& p_c) {
  const double inv_z = 1.0 / p_c.z();
  Eigen::Matrix<double, 2, 3> J;
  J << inv_z, 0.0, -p_c.x() * inv_z * inv_z,
       0.0, inv_z, -p_c.y() * inv_z * inv_z;
  return J;
}

namespace {

struct View {
  const CameraClone* clone;
  Vector2d z;
};

std::vector<View> gather_views(const FeatureTrack& track, std::span<const CameraClone> clones) {
  std::vector<View> views;
  views.reserve(track.observations.size());
  for (const auto& obs : track.observations) {
    for (const auto& clone : clones) {
      if (std::abs(clone.stamp - obs.stamp) <= 1e-9) {
        views.push_back({&clone, obs.z});
        break;
      }
    }
  }
  return views;
}

}  // namespace

std::optional<TriangulatedFeature> triangulate(const FeatureTrack& track, std::span<const CameraClone> clones,
                                               const TriangulationOptions& options) {
  const std::vector<View> views = gather_views(track, clones);
  if (views.size() < 2) return std::nullopt;

  double baseline = 0.0;
  for (const auto& v : views) baseline = std::max(baseline, (v.clone->pos - views.front().clone->pos).norm());
  if (baseline < options.min_baseline) return std::nullopt;

  // Each view constrains the point to its bearing ray: (I - b b^T)(p - c) = 0.
  Matrix3d A = Matrix3d::Zero();
  Vector3d rhs = Vector3d::Zero();
  for (const auto& v : views) {
    const Vector3d b = (v.clone->rot * Vector3d(v.z.x(), v.z.y(), 1.0)).normalized();
    const Matrix3d proj = Matrix3d::Identity() - b * b.transpose();
    A += proj;
    rhs += proj * v.clone->pos;
  }
  Eigen::SelfAdjointEigenSolver<Matrix3d> es(A);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  if (!(ev_min > 0.0)) return std::nullopt;
  const double condition = ev_max / ev_min;
  if (condition > options.max_condition) return std::nullopt;
  const Vector3d p_linear = A.ldlt().solve(rhs);

  // Anchored inverse depth (alpha, beta, rho) in the first view.
  const CameraClone& anchor = *views.front().clone;
  const Vector3d p_anchor = anchor.rot.transpose() * (p_linear - anchor.pos);
  if (p_anchor.z() <= options.min_depth) return std::nullopt;
  Vector3d param(p_anchor.x() / p_anchor.z(), p_anchor.y() / p_anchor.z(), 1.0 / p_anchor.z());

  auto cost_and_normal = [&](const Vector3d& x, Matrix3d* JtJ, Vector3d* Jtr) -> std::optional<double> {
    double cost = 0.0;
    if (JtJ) JtJ->setZero();
    if (Jtr) Jtr->setZero();
    for (const auto& v : views) {
      const Matrix3d R_ia = v.clone->rot.transpose() * anchor.rot;
      const Vector3d t_ia = v.clone->rot.transpose() * (anchor.pos - v.clone->pos);
      const Vector3d h = R_ia * Vector3d(x.x(), x.y(), 1.0) + x.z() * t_ia;
      if (h.z() <= 0.0) return std::nullopt;
      const Vector2d res = v.z - project(h);
      cost += res.squaredNorm();
      if (JtJ) {
        Matrix3d dh;
        dh << R_ia.col(0), R_ia.col(1), t_ia;
        const Eigen::Matrix<double, 2, 3> J = projection_jacobian(h) * dh;
        *JtJ += J.transpose() * J;
        *Jtr += J.transpose() * res;
      }
    }
    return cost;
  };

  double lambda = 1e-6;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Matrix3d JtJ;
    Vector3d Jtr;
    const auto cost = cost_and_normal(param, &JtJ, &Jtr);
    if (!cost) return std::nullopt;
    bool improved = false;
    Vector3d step = Vector3d::Zero();
    for (int attempt = 0; attempt < 8; ++attempt) {
      Matrix3d damped = JtJ;
      damped.diagonal() *= (1.0 + lambda);
      step = damped.ldlt().solve(Jtr);
      const auto trial = cost_and_normal(param + step, nullptr, nullptr);
      if (trial && *trial <= *cost) {
        param += step;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved || step.norm() < 1e-12 * (1.0 + param.norm())) break;
  }

  if (!(param.z() > 0.0)) return std::nullopt;
  const Vector3d pos = anchor.pos + anchor.rot * Vector3d(param.x(), param.y(), 1.0) / param.z();

  double cost = 0.0;
  for (const auto& v : views) {
    const Vector3d p_c = v.clone->rot.transpose() * (pos - v.clone->pos);
    if (p_c.z() <= options.min_depth || p_c.z() > options.max_depth) return std::nullopt;
    cost += (v.z - project(p_c)).squaredNorm();
  }
  const double rms = std::sqrt(cost / (2.0 * static_cast<double>(views.size())));
  if (rms > options.max_rms) return std::nullopt;
  return TriangulatedFeature{pos, condition};
}

FeatureJacobians feature_jacobians(const FilterState& state, const TriangulatedFeature& feature,
                                   const FeatureTrack& track) {
  struct Row {
    int clone;
    Vector3d p_c;
    Vector2d z;
  };
  std::vector<Row> rows;
  rows.reserve(track.observations.size());
  for (const auto& obs : track.observations) {
    const int c = state.find_clone(obs.stamp);
    if (c < 0) throw std::invalid_argument("feature_jacobians: observation without a clone");
    const CameraClone& clone = state.clones[c];
    const Vector3d p_c = clone.rot.transpose() * (feature.pos - clone.pos);
    if (p_c.z() <= 1e-6) continue;
    rows.push_back({c, p_c, obs.z});
  }

  const int m = 2 * static_cast<int>(rows.size());
  FeatureJacobians out;
  out.H_x = MatrixXd::Zero(m, state.dim());
  out.H_f = MatrixXd::Zero(m, 3);
  out.r = VectorXd::Zero(m);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    const Row& row = rows[i];
    const Matrix3d Rt = state.clones[row.clone].rot.transpose();
    const Eigen::Matrix<double, 2, 3> Jp = projection_jacobian(row.p_c);
    const int col = FilterState::clone_offset(row.clone);
    out.H_x.block<2, 3>(2 * i, col) = Jp * skew(row.p_c) * Rt;
    out.H_x.block<2, 3>(2 * i, col + 3) = -Jp * Rt;
    out.H_f.block<2, 3>(2 * i, 0) = Jp * Rt;
    out.r.segment<2>(2 * i) = row.z - project(row.p_c);
  }
  return out;
}

std::optional<ProjectedMeasurement> nullspace_project(const MatrixXd& H_x, const MatrixXd& H_f, const VectorXd& r) {
  const int m = static_cast<int>(H_f.rows());
  if (m < 4 || H_f.cols() != 3) return std::nullopt;

  Eigen::ColPivHouseholderQR<MatrixXd> rank_qr(H_f);
  rank_qr.setThreshold(1e-9);
  if (rank_qr.rank() < 3) return std::nullopt;

  Eigen::HouseholderQR<MatrixXd> qr(H_f);
  MatrixXd stacked(m, H_x.cols() + 1);
  stacked << H_x, r;
  stacked.applyOnTheLeft(qr.householderQ().adjoint());

  ProjectedMeasurement out;
  out.H = stacked.bottomLeftCorner(m - 3, H_x.cols());
  out.r = stacked.bottomRightCorner(m - 3, 1);
  return out;
}

VisualUpdateStats visual_update(FilterState& state, std::span<const FeatureTrack> tracks,
                                const VisualUpdateOptions& options) {
  VisualUpdateStats stats;
  stats.tracks = static_cast<int>(tracks.size());

  std::vector<const FeatureTrack*> ordered;
  ordered.reserve(tracks.size());
  for (const auto& t : tracks) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  const double var = options.pixel_sigma * options.pixel_sigma;
  std::vector<ProjectedMeasurement> accepted;
  for (const FeatureTrack* track : ordered) {
    const auto feature = triangulate(*track, state.clones, options.triangulation);
    if (!feature) continue;
    ++stats.triangulated;
    stats.landmarks.emplace_back(track->id, feature->pos);

    const FeatureJacobians jac = feature_jacobians(state, *feature, *track);
    auto projected = nullspace_project(jac.H_x, jac.H_f, jac.r);
    if (!projected) continue;

    if (options.gate_features) {
      const int rows = static_cast<int>(projected->r.size());
      MatrixXd S = projected->H * state.cov * projected->H.transpose();
      S.diagonal().array() += var;
      const double d2 = projected->r.dot(S.ldlt().solve(projected->r));
      if (!(d2 <= chi2_quantile(options.gate_probability, rows))) {
        ++stats.gated_out;
        continue;
      }
    }
    accepted.push_back(std::move(*projected));
  }
  if (accepted.empty()) return stats;

  int rows = 0;
  for (const auto& a : accepted) rows += static_cast<int>(a.r.size());
  MatrixXd H(rows, state.dim());
  VectorXd r(rows);
  int at = 0;
  for (const auto& a : accepted) {
    const int k = static_cast<int>(a.r.size());
    H.middleRows(at, k) = a.H;
    r.segment(at, k) = a.r;
    at += k;
  }
  stats.used = static_cast<int>(accepted.size());
  stats.rows = rows;
  if (options.compress) compress_measurement(H, r);

  const MatrixXd R = MatrixXd::Identity(r.size(), r.size()) * var;
  UpdateOptions update_options;
  update_options.gate = false;
  stats.applied = kalman_update(state, H, r, R, update_options).accepted;
  return stats;
}

Vector2d image_plane_velocity(const Vector2d& x, double depth, const Vector3d& v_rel) {
  return (v_rel.head<2>() - v_rel.z() * x) / depth;
}

OutlierDetection detect_outliers(std::span<const FeaturePair> pairs, const Matrix3d& R_GC, const Vector3d& v_C,
                                 const Vector3d& omega, double dt, const OutlierDetectorOptions& options) {
  OutlierDetection out;
  if (static_cast<int>(pairs.size()) < options.min_features || omega.norm() >= options.omega_max || !(dt > 0.0)) {
    out.skipped = true;
    return out;
  }
  // A static point moves at -v_C relative to the camera.
  const Vector3d v_rel = -(R_GC.transpose() * v_C);
  out.errors.reserve(pairs.size());
  double sum_sq = 0.0;
  for (const auto& p : pairs) {
    const Vector2d predicted = image_plane_velocity(p.z0, p.depth, v_rel);
    const Vector2d measured = (p.z1 - p.z0) / dt;
    const double e = (measured - predicted).norm();
    out.errors.push_back(e);
    sum_sq += e * e;
  }
  out.threshold = std::max(std::sqrt(sum_sq / static_cast<double>(pairs.size())), options.min_threshold);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (out.errors[i] > out.threshold) out.flagged.push_back(pairs[i].id);
  }
  return out;
}

OutlierDetection detect_outliers(std::span<const FeaturePair> pairs, const FilterState& state,
                                 const CameraExtrinsics& extrinsics, const Vector3d& omega, double dt,
                                 const OutlierDetectorOptions& options) {
  const Matrix3d R_GC = state.imu.rot * extrinsics.R_IC;
  const Vector3d v_C = state.imu.vel + state.imu.rot * omega.cross(extrinsics.p_IC);
  return detect_outliers(pairs, R_GC, v_C, omega, dt, options);
}

}  // namespace viwo
