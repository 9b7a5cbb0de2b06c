#pragma once

#include "viwo/types.hpp"

#include <vector>

namespace viwo {

inline const Vector3d kGravity(0.0, 0.0, -9.81);

/// World-from-camera pose captured when an image arrives.
///
/// Error convention (all modes): R = exp(th) R^, p = p^ + dp.
struct CameraClone {
  Matrix3d rot = Matrix3d::Identity();
  Vector3d pos = Vector3d::Zero();
  double stamp = 0.0;
};

/// Sliding-window filter state. The error vector is ordered
/// [imu(15), clone_0(6), ..., clone_{n-1}(6)] and cov matches it.
struct FilterState {
  ImuState imu;
  std::vector<CameraClone> clones;
  MatrixXd cov = MatrixXd::Zero(kImuErrorDim, kImuErrorDim);
  ErrorMode mode = ErrorMode::PartialInvariant;
  Vector3d gravity = kGravity;
  double stamp = 0.0;

  int dim() const { return kImuErrorDim + kCloneErrorDim * static_cast<int>(clones.size()); }
  static int clone_offset(int index) { return kImuErrorDim + kCloneErrorDim * index; }

  /// Index of the clone taken at `stamp`, or -1.
  int find_clone(double stamp, double tol = 1e-9) const;
};

/// Symmetric within `tol` and min eigenvalue >= -tol * trace.
bool covariance_is_valid(const MatrixXd& cov, double tol = 1e-9);

}  // namespace viwo
