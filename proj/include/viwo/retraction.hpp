#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"

namespace viwo {

/// Applies a 15-vector error (rot, vel, pos, bg, ba) to a nominal IMU state.
ImuState retract(const ImuState& nominal, const Vector15d& xi, ErrorMode mode);

/// Inverse of retract: the error that maps `nominal` onto `state`.
Vector15d local(const ImuState& state, const ImuState& nominal, ErrorMode mode);

CameraClone retract(const CameraClone& nominal, const Eigen::Matrix<double, 6, 1>& xi);
Eigen::Matrix<double, 6, 1> local(const CameraClone& clone, const CameraClone& nominal);

/// Injects a full (15 + 6n) error vector into every block of the state.
void inject(FilterState& state, const VectorXd& delta);

/// Full-state inverse retraction; both states must share the clone layout.
VectorXd local(const FilterState& state, const FilterState& nominal);

/// First-order sensitivity of the world velocity and position to the IMU
/// rotation error under `mode`: dv/dth and dp/dth.  The sensitivity to the
/// velocity and position errors themselves is the identity in every mode.
Matrix3d velocity_rotation_sensitivity(const ImuState& nominal, ErrorMode mode);
Matrix3d position_rotation_sensitivity(const ImuState& nominal, ErrorMode mode);

}  // namespace viwo
