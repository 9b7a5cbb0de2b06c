#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"
#include "viwo/update.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace viwo {

using FeatureId = std::uint64_t;

/// Normalized image-plane observation [x/z, y/z] tied to the clone taken at `stamp`.
struct FeatureObservation {
  double stamp = 0.0;
  Vector2d z = Vector2d::Zero();
};

struct FeatureTrack {
  FeatureId id = 0;
  std::vector<FeatureObservation> observations;
};

struct TriangulatedFeature {
  Vector3d pos = Vector3d::Zero();  // world frame
  double condition = 0.0;           // eigenvalue ratio of the linear system
};

struct TriangulationOptions {
  double min_baseline = 0.1;
  double min_depth = 0.1;
  double max_depth = 150.0;
  int max_iterations = 10;
  double max_condition = 1e8;
  /// RMS reprojection error bound in normalized units (about 5 px at f = 460).
  double max_rms = 5.0 / 460.0;
};

/// Pinhole projection onto the normalized plane.
inline Vector2d project(const Vector3d& p_c) { return p_c.head<2>() / p_c.z(); }

/// d project / d p_c.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vector3d& p_c);

/// Linear multi-view solve refined by Gauss-Newton in anchored inverse depth.
/// Returns nullopt for unusable tracks (too few views, short baseline,
/// cheirality or depth-range failure, poor fit).
std::optional<TriangulatedFeature> triangulate(const FeatureTrack& track, std::span<const CameraClone> clones,
                                               const TriangulationOptions& options = {});

/// Stacked linearization  r = H_x xi + H_f dp_f  over the observing clones.
/// Observations whose clone sees the feature behind it are dropped.
struct FeatureJacobians {
  MatrixXd H_x;
  MatrixXd H_f;
  VectorXd r;
};

FeatureJacobians feature_jacobians(const FilterState& state, const TriangulatedFeature& feature,
                                   const FeatureTrack& track);

/// Projects onto the left nullspace of H_f. Needs at least four rows and a
/// rank-3 H_f; the result has rows(H_f) - 3 rows.
struct ProjectedMeasurement {
  MatrixXd H;
  VectorXd r;
};

std::optional<ProjectedMeasurement> nullspace_project(const MatrixXd& H_x, const MatrixXd& H_f, const VectorXd& r);

struct VisualUpdateOptions {
  double pixel_sigma = 1.0 / 460.0;  // normalized units
  double gate_probability = 0.95;
  bool gate_features = true;
  bool compress = true;
  TriangulationOptions triangulation;
};

struct VisualUpdateStats {
  int tracks = 0;
  int triangulated = 0;
  int gated_out = 0;
  int used = 0;
  int rows = 0;
  bool applied = false;
  std::vector<std::pair<FeatureId, Vector3d>> landmarks;  // successful triangulations
};

/// MSCKF update over finished tracks: triangulate, linearize, project out
/// the feature, gate each feature, then one stacked update (not re-gated).
VisualUpdateStats visual_update(FilterState& state, std::span<const FeatureTrack> tracks,
                                const VisualUpdateOptions& options);

// ---------------------------------------------------------------------------
// Dynamic-feature detection from image-plane velocities.

/// A feature seen in two consecutive frames; z0 and depth refer to the first.
struct FeaturePair {
  FeatureId id = 0;
  Vector2d z0 = Vector2d::Zero();
  Vector2d z1 = Vector2d::Zero();
  double depth = 0.0;
};

struct OutlierDetectorOptions {
  int min_features = 8;
  double omega_max = 0.05;    // rad/s; detection is skipped above this rate
  double min_threshold = 1e-9;  // floor on the adaptive threshold (normalized units / s)
};

struct OutlierDetection {
  std::vector<FeatureId> flagged;
  bool skipped = false;
  double threshold = 0.0;
  std::vector<double> errors;  // per input pair, same order
};

/// Image-plane velocity of a point at normalized position x and depth Z
/// whose velocity relative to the camera, in camera coordinates, is v_rel:
///   d/dt (X/Z, Y/Z) = (v_rel.xy - v_rel.z * x) / Z
Vector2d image_plane_velocity(const Vector2d& x, double depth, const Vector3d& v_rel);

/// Flags features whose measured image velocity departs from the one a
/// static point would have by more than the RMS of all departures.
/// R_GC and v_C are the first camera's orientation and world velocity.
OutlierDetection detect_outliers(std::span<const FeaturePair> pairs, const Matrix3d& R_GC, const Vector3d& v_C,
                                 const Vector3d& omega, double dt, const OutlierDetectorOptions& options = {});

/// Same, taking the camera motion from the filter state and a bias-corrected
/// gyro reading.
OutlierDetection detect_outliers(std::span<const FeaturePair> pairs, const FilterState& state,
                                 const CameraExtrinsics& extrinsics, const Vector3d& omega, double dt,
                                 const OutlierDetectorOptions& options = {});

}  // namespace viwo
