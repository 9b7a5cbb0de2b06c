#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"
#include "viwo/update.hpp"

#include <optional>
#include <span>

namespace viwo {

/// Odometer reading: yaw rate (rad/s) and forward speed (m/s).
struct WheelSample {
  double stamp = 0.0;
  double w = 0.0;
  double v = 0.0;
};

/// Wheel yaw integrated between two clone stamps.
struct YawPreintegration {
  double phi = 0.0;
  double t_k = 0.0;
  double t_k1 = 0.0;
};

/// Trapezoidal integral of the piecewise-linear yaw rate over [t_k, t_k1].
/// Returns nullopt when the samples leave a gap longer than one sample
/// period inside or at the ends of the span. Samples must be time-ordered.
std::optional<YawPreintegration> preintegrate_yaw(std::span<const WheelSample> samples, double t_k, double t_k1);

/// A linearized measurement ready for kalman_update.
struct Linearization {
  MatrixXd H;
  VectorXd r;
  MatrixXd R;
};

/// Relative odometer rotation between the clone at t_k and the current IMU pose.
Matrix3d predict_relative_rotation(const ImuState& imu, const CameraClone& clone_k, const CameraExtrinsics& cam,
                                   const WheelExtrinsics& wheel);

/// Yaw residual e3^T log(R_rel^T Rz(phi)) against the prediction.
double wheel_rotation_residual(const ImuState& imu, const CameraClone& clone_k, const CameraExtrinsics& cam,
                               const WheelExtrinsics& wheel, double phi);

Linearization linearize_wheel_rotation(const FilterState& state, int clone_k, double phi, double variance,
                                       const CameraExtrinsics& cam, const WheelExtrinsics& wheel);

/// Odometer-frame velocity predicted from the IMU state and a raw gyro
/// reading; the gyro bias estimate is removed internally.
Vector3d predict_wheel_velocity(const ImuState& imu, const Vector3d& omega_m, const WheelExtrinsics& wheel);

/// Residual [v, 0, 0] - prediction: forward speed plus the two
/// non-holonomic rows.
Linearization linearize_wheel_velocity(const FilterState& state, const WheelSample& sample, const Vector3d& omega_m,
                                       const WheelExtrinsics& wheel, double sigma_v, double sigma_nh);

/// [x, y] components of the odometer z axis and the odometer height, both in
/// the plane frame (plane_rot maps world to plane coordinates).
Vector3d predict_plane(const ImuState& imu, const Matrix3d& plane_rot, const WheelExtrinsics& wheel);

/// Pseudo-measurement pinning the prediction above to zero.
Linearization linearize_plane(const FilterState& state, const Matrix3d& plane_rot, const WheelExtrinsics& wheel,
                              double sigma_plane);

inline constexpr double kNonHolonomicSigma = 0.05;  // m/s

/// Variance of an integrated yaw from white per-sample rate noise.
inline double yaw_variance(double sigma_w, double sample_period, double span) {
  return sigma_w * sigma_w * sample_period * span;
}

UpdateResult wheel_rotation_update(FilterState& state, int clone_k, const YawPreintegration& preint, double variance,
                                   const CameraExtrinsics& cam, const WheelExtrinsics& wheel,
                                   const UpdateOptions& options = {});

UpdateResult wheel_velocity_update(FilterState& state, const WheelSample& sample, const Vector3d& omega_m,
                                   const WheelExtrinsics& wheel, double sigma_v,
                                   double sigma_nh = kNonHolonomicSigma, const UpdateOptions& options = {});

UpdateResult plane_update(FilterState& state, const Matrix3d& plane_rot, const WheelExtrinsics& wheel,
                          double sigma_plane, const UpdateOptions& options = {});

}  // namespace viwo
