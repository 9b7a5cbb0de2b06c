#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "viwo/lie.hpp"
#include "viwo/visual.hpp"

#include <algorithm>
#include <random>

namespace viwo {
namespace {

CameraClone clone_at(const Vector3d& pos, const Matrix3d& rot, double stamp) {
  CameraClone c;
  c.pos = pos;
  c.rot = rot;
  c.stamp = stamp;
  return c;
}

FeatureTrack perfect_track(const Vector3d& p, const std::vector<CameraClone>& clones) {
  FeatureTrack t;
  t.id = 1;
  for (const auto& c : clones) t.observations.push_back({c.stamp, project(Vector3d(c.rot.transpose() * (p - c.pos)))});
  return t;
}

TEST(Projection, Jacobian) {
  const Eigen::Matrix<double, 2, 3> J = projection_jacobian(Vector3d(0, 0, 2));
  Eigen::Matrix<double, 2, 3> expected;
  expected << 0.5, 0, 0, 0, 0.5, 0;
  EXPECT_LT((J - expected).norm(), 1e-15);

  const Vector3d p(0.3, -0.4, 3.0);
  const Eigen::Matrix<double, 2, 3> Jp = projection_jacobian(p);
  for (int i = 0; i < 3; ++i) {
    const Vector3d d = Vector3d::Unit(i) * 1e-6;
    const Vector2d num = (project(Vector3d(p + d)) - project(Vector3d(p - d))) / 2e-6;
    EXPECT_LT((Jp.col(i) - num).norm(), 1e-8);
  }
}

TEST(Triangulate, TwoViews) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(1, 0, 0), Matrix3d::Identity(), 0.1)};
  const Vector3d p(0.5, 0.2, 5.0);
  const auto f = triangulate(perfect_track(p, clones), clones);
  ASSERT_TRUE(f.has_value());
  EXPECT_LT((f->pos - p).norm(), 1e-9);
  EXPECT_GT(f->condition, 1.0);
}

TEST(Triangulate, RejectsPointBehindCameras) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(1, 0, 0), Matrix3d::Identity(), 0.1)};
  // Same bearings as a point at z = -5, seen through the image plane.
  const Vector3d behind(0.5, 0.2, -5.0);
  FeatureTrack t;
  for (const auto& c : clones) {
    const Vector3d p_c = c.rot.transpose() * (behind - c.pos);
    t.observations.push_back({c.stamp, project(p_c)});
  }
  EXPECT_FALSE(triangulate(t, clones).has_value());
}

TEST(Triangulate, RejectsShortBaseline) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(0.05, 0, 0), Matrix3d::Identity(), 0.1)};
  EXPECT_FALSE(triangulate(perfect_track(Vector3d(0, 0, 5), clones), clones).has_value());
}

TEST(Triangulate, RejectsSingleView) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0)};
  EXPECT_FALSE(triangulate(perfect_track(Vector3d(0, 0, 5), clones), clones).has_value());
}

TEST(Triangulate, RejectsFarPoint) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(5, 0, 0), Matrix3d::Identity(), 0.1)};
  EXPECT_FALSE(triangulate(perfect_track(Vector3d(0, 0, 200), clones), clones).has_value());
}

TEST(Triangulate, RejectsInconsistentTrack) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(1, 0, 0), Matrix3d::Identity(), 0.1),
                                        clone_at(Vector3d(2, 0, 0), Matrix3d::Identity(), 0.2)};
  FeatureTrack t = perfect_track(Vector3d(0.5, 0.2, 5.0), clones);
  t.observations[1].z.y() += 0.2;
  EXPECT_FALSE(triangulate(t, clones).has_value());
}

TEST(Triangulate, ArcOfTenNoisyViews) {
  // Ten cameras on an arc looking at the same region, 1 px noise.
  const Vector3d p(0.0, 0.0, 10.0);
  std::vector<CameraClone> clones;
  for (int i = 0; i < 10; ++i) {
    const double a = -0.3 + 0.6 * i / 9.0;
    const Vector3d c(10.0 * std::sin(a), 0.0, 10.0 - 10.0 * std::cos(a));
    clones.push_back(clone_at(c, so3_exp(Vector3d(0, a, 0)), 0.1 * i));
  }
  const auto exact = triangulate(perfect_track(p, clones), clones);
  ASSERT_TRUE(exact.has_value());
  EXPECT_LT((exact->pos - p).norm(), 1e-6);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> px(0.0, 1.0 / 460.0);
  FeatureTrack noisy = perfect_track(p, clones);
  for (auto& o : noisy.observations) o.z += Vector2d(px(rng), px(rng));
  const auto f = triangulate(noisy, clones);
  ASSERT_TRUE(f.has_value());
  EXPECT_LT((f->pos - p).norm(), 0.1);
}

TEST(Triangulate, IgnoresObservationsWithoutClone) {
  const std::vector<CameraClone> clones{clone_at(Vector3d::Zero(), Matrix3d::Identity(), 0.0),
                                        clone_at(Vector3d(1, 0, 0), Matrix3d::Identity(), 0.1)};
  FeatureTrack t = perfect_track(Vector3d(0.5, 0.2, 5.0), clones);
  t.observations.push_back({7.0, Vector2d(0.9, 0.9)});
  const auto f = triangulate(t, clones);
  ASSERT_TRUE(f.has_value());
  EXPECT_LT((f->pos - Vector3d(0.5, 0.2, 5.0)).norm(), 1e-9);
}

TEST(FeatureJacobians, ZeroResidualAtTruth) {
  std::mt19937_64 rng(3);
  const FilterState st = random_filter_state(rng, ErrorMode::PartialInvariant, 4);
  const Vector3d p = st.clones[0].pos + st.clones[0].rot * Vector3d(0.2, -0.1, 6.0);
  const FeatureTrack t = perfect_track(p, st.clones);
  const FeatureJacobians j = feature_jacobians(st, TriangulatedFeature{p, 1.0}, t);
  EXPECT_EQ(j.r.size(), 8);
  EXPECT_LT(j.r.norm(), 1e-12);
  EXPECT_TRUE(j.H_x.leftCols(15).isZero(0.0));
}

TEST(FeatureJacobians, ThrowsWithoutClone) {
  std::mt19937_64 rng(4);
  const FilterState st = random_filter_state(rng, ErrorMode::Standard, 2);
  FeatureTrack t;
  t.observations.push_back({42.0, Vector2d::Zero()});
  EXPECT_THROW(feature_jacobians(st, TriangulatedFeature{}, t), std::invalid_argument);
}

TEST(NullspaceProject, AnnihilatesFeatureJacobian) {
  std::mt19937_64 rng(5);
  for (int n : {2, 4, 8}) {
    auto inst = testing::random_visual_instance(rng, ErrorMode::PartialInvariant, n);
    const FeatureJacobians j = feature_jacobians(inst.state, inst.feature, inst.track);
    const auto proj = nullspace_project(j.H_x, j.H_f, j.r);
    ASSERT_TRUE(proj.has_value());
    EXPECT_EQ(proj->H.rows(), 2 * n - 3);
    EXPECT_EQ(proj->r.size(), 2 * n - 3);

    // The projector's rows are orthonormal and orthogonal to range(H_f).
    Eigen::HouseholderQR<MatrixXd> qr(j.H_f);
    const MatrixXd Q = qr.householderQ();
    const MatrixXd N = Q.rightCols(2 * n - 3);
    EXPECT_LT((N.transpose() * j.H_f).norm(), 1e-10 * j.H_f.norm());
    EXPECT_LT((N.transpose() * j.H_x - proj->H).norm(), 1e-10 * (1.0 + j.H_x.norm()));
  }
}

TEST(NullspaceProject, NeedsFourRowsAndFullRank) {
  EXPECT_FALSE(nullspace_project(MatrixXd::Zero(2, 21), MatrixXd::Identity(2, 3), VectorXd::Zero(2)).has_value());
  MatrixXd Hf = MatrixXd::Zero(6, 3);
  Hf.col(0).setOnes();
  Hf.col(1).setOnes();
  Hf.col(2) = VectorXd::LinSpaced(6, 0, 1);
  EXPECT_FALSE(nullspace_project(MatrixXd::Zero(6, 21), Hf, VectorXd::Zero(6)).has_value());
}

TEST(VisualUpdate, MatchesJointEstimationAndMarginalization) {
  std::mt19937_64 rng(6);
  const double var = 1.0 / (460.0 * 460.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = testing::random_visual_instance(rng, ErrorMode::PartialInvariant, 5);
    const FeatureJacobians j = feature_jacobians(inst.state, inst.feature, inst.track);
    const auto proj = nullspace_project(j.H_x, j.H_f, j.r);
    ASSERT_TRUE(proj.has_value());
    const auto oracle = testing::joint_then_marginalize(inst.state.cov, j.H_x, j.H_f, j.r, var);

    const MatrixXd& P = inst.state.cov;
    const MatrixXd S = proj->H * P * proj->H.transpose() + var * MatrixXd::Identity(proj->H.rows(), proj->H.rows());
    const MatrixXd K = P * proj->H.transpose() * S.inverse();
    const VectorXd delta = K * proj->r;
    const MatrixXd cov = P - K * proj->H * P;
    EXPECT_LT((delta - oracle.delta).norm(), 1e-6 * (1.0 + oracle.delta.norm()));
    EXPECT_LT((cov - oracle.cov).norm(), 1e-6 * oracle.cov.norm());
  }
}

TEST(VisualUpdate, NoiselessTracksLeaveStateAtTruth) {
  std::mt19937_64 rng(7);
  FilterState st = random_filter_state(rng, ErrorMode::PartialInvariant, 5);
  std::vector<FeatureTrack> tracks;
  for (int i = 0; i < 20; ++i) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vector3d p = st.clones[0].pos + st.clones[0].rot * Vector3d(u(rng), u(rng), 6.0 + u(rng));
    FeatureTrack t = perfect_track(p, st.clones);
    t.id = 100 - i;
    tracks.push_back(t);
  }
  const FilterState before = st;
  VisualUpdateOptions opts;
  const VisualUpdateStats stats = visual_update(st, tracks, opts);
  EXPECT_EQ(stats.tracks, 20);
  EXPECT_EQ(stats.triangulated, 20);
  EXPECT_EQ(stats.used, 20);
  EXPECT_EQ(stats.rows, 20 * 7);
  EXPECT_TRUE(stats.applied);
  EXPECT_LT(local(st, before).norm(), 1e-8);
  EXPECT_LT(st.cov.trace(), before.cov.trace());
  EXPECT_TRUE(covariance_is_valid(st.cov));
}

TEST(VisualUpdate, GateDropsCorruptedFeature) {
  std::mt19937_64 rng(8);
  FilterState st = random_filter_state(rng, ErrorMode::PartialInvariant, 5);
  st.cov *= 1e-4;
  std::vector<FeatureTrack> tracks;
  for (int i = 0; i < 5; ++i) {
    const Vector3d p = st.clones[0].pos + st.clones[0].rot * Vector3d(0.3 * i - 0.6, 0.1, 7.0);
    FeatureTrack t = perfect_track(p, st.clones);
    t.id = i;
    tracks.push_back(t);
  }
  // Shift one observation by 3 px: still triangulable, but inconsistent.
  tracks[2].observations[3].z.x() += 3.0 / 460.0;
  VisualUpdateOptions opts;
  opts.pixel_sigma = 0.1 / 460.0;
  const VisualUpdateStats stats = visual_update(st, tracks, opts);
  EXPECT_EQ(stats.gated_out, 1);
  EXPECT_EQ(stats.used, 4);
}

TEST(VisualUpdate, CompressionDoesNotChangeTheResult) {
  std::mt19937_64 rng(9);
  FilterState a = random_filter_state(rng, ErrorMode::FullInvariant, 4);
  std::vector<FeatureTrack> tracks;
  std::normal_distribution<double> px(0.0, 1.0 / 460.0);
  for (int i = 0; i < 15; ++i) {
    const Vector3d p = a.clones[0].pos + a.clones[0].rot * Vector3d(0.1 * i - 0.7, 0.05 * i - 0.3, 5.0 + 0.1 * i);
    FeatureTrack t = perfect_track(p, a.clones);
    for (auto& o : t.observations) o.z += Vector2d(px(rng), px(rng));
    t.id = i;
    tracks.push_back(t);
  }
  FilterState b = a;
  VisualUpdateOptions with, without;
  without.compress = false;
  visual_update(a, tracks, with);
  visual_update(b, tracks, without);
  EXPECT_LT(local(a, b).norm(), 1e-9);
  EXPECT_LT((a.cov - b.cov).norm(), 1e-9 * a.cov.norm());
}

// Scene in the camera frame: camera moving with velocity v_C, looking down +z.
std::vector<FeaturePair> static_pairs(const Vector3d& v_C, double dt, int n) {
  std::vector<FeaturePair> pairs;
  for (int i = 0; i < n; ++i) {
    const Vector3d p(-3.0 + 0.5 * (i % 12), -1.0 + 0.3 * (i / 12), 10.0 + i);
    const Vector3d p1 = p - v_C * dt;
    pairs.push_back({static_cast<FeatureId>(i), project(p), project(p1), p.z()});
  }
  return pairs;
}

TEST(ImagePlaneVelocity, MatchesFiniteDifference) {
  const Vector3d p(1.0, -0.5, 8.0);
  const Vector3d v_rel(0.3, 0.2, -2.0);
  const double h = 1e-7;
  const Vector2d numeric = (project(Vector3d(p + v_rel * h)) - project(Vector3d(p - v_rel * h))) / (2 * h);
  EXPECT_LT((image_plane_velocity(project(p), p.z(), v_rel) - numeric).norm(), 1e-8);
}

TEST(DetectOutliers, ExactStaticSceneFlagsNothing) {
  // Purely lateral motion keeps the linear flow model exact.
  const Vector3d v_C(2.0, 0.0, 0.0);
  const auto pairs = static_pairs(v_C, 0.1, 30);
  const auto det = detect_outliers(pairs, Matrix3d::Identity(), v_C, Vector3d::Zero(), 0.1);
  EXPECT_FALSE(det.skipped);
  EXPECT_TRUE(det.flagged.empty());
  for (double e : det.errors) EXPECT_LT(e, 1e-9);
}

TEST(DetectOutliers, FlagsMovingFeatures) {
  const Vector3d v_C(2.0, 0.0, 0.0);
  auto pairs = static_pairs(v_C, 0.1, 30);
  for (int k : {3, 17}) {
    pairs[k].z1 += Vector2d(0.05, -0.03);
  }
  const auto det = detect_outliers(pairs, Matrix3d::Identity(), v_C, Vector3d::Zero(), 0.1);
  ASSERT_EQ(det.flagged.size(), 2u);
  EXPECT_EQ(det.flagged[0], 3u);
  EXPECT_EQ(det.flagged[1], 17u);
}

TEST(DetectOutliers, ThresholdScalesWithTheErrors) {
  const Vector3d v_C(2.0, 0.0, 0.0);
  auto pairs = static_pairs(v_C, 0.1, 30);
  pairs[0].z1.x() += 0.01;
  auto scaled = pairs;
  scaled[0].z1.x() += 0.01;
  const auto a = detect_outliers(pairs, Matrix3d::Identity(), v_C, Vector3d::Zero(), 0.1);
  const auto b = detect_outliers(scaled, Matrix3d::Identity(), v_C, Vector3d::Zero(), 0.1);
  EXPECT_NEAR(b.threshold / a.threshold, 2.0, 1e-6);
  EXPECT_EQ(a.flagged, b.flagged);
}

TEST(DetectOutliers, ForwardMotionUsesCameraFrameVelocity) {
  const Matrix3d R_GC = so3_exp(Vector3d(0.4, -1.1, 2.0));
  const Vector3d v_world = R_GC * Vector3d(0, 0, 5.0);
  std::vector<FeaturePair> pairs;
  for (int i = 0; i < 20; ++i) {
    const Vector3d p(-2.0 + 0.2 * i, 1.0 - 0.1 * i, 15.0 + i);
    const double dt = 1e-4;  // short interval keeps the first-order flow accurate
    const Vector3d p1 = p - Vector3d(0, 0, 5.0) * dt;
    pairs.push_back({static_cast<FeatureId>(i), project(p), project(p1), p.z()});
  }
  const auto det = detect_outliers(pairs, R_GC, v_world, Vector3d::Zero(), 1e-4);
  for (double e : det.errors) EXPECT_LT(e, 1e-4);
}

TEST(DetectOutliers, SkipsWithFewFeatures) {
  const auto pairs = static_pairs(Vector3d(1, 0, 0), 0.1, 7);
  const auto det = detect_outliers(pairs, Matrix3d::Identity(), Vector3d(1, 0, 0), Vector3d::Zero(), 0.1);
  EXPECT_TRUE(det.skipped);
  EXPECT_TRUE(det.flagged.empty());
}

TEST(DetectOutliers, SkipsWhileTurning) {
  auto pairs = static_pairs(Vector3d(1, 0, 0), 0.1, 20);
  pairs[0].z1.x() += 0.1;
  const auto slow = detect_outliers(pairs, Matrix3d::Identity(), Vector3d(1, 0, 0), Vector3d(0, 0.049, 0), 0.1);
  EXPECT_FALSE(slow.skipped);
  const auto fast = detect_outliers(pairs, Matrix3d::Identity(), Vector3d(1, 0, 0), Vector3d(0, 0.05, 0), 0.1);
  EXPECT_TRUE(fast.skipped);
}

}  // namespace
}  // namespace viwo
