#include "viwo/wheel_plane.hpp"

#include "viwo/lie.hpp"
#include "viwo/retraction.hpp"

#include <algorithm>
#include <cmath>

namespace viwo {

std::optional<YawPreintegration> preintegrate_yaw(std::span<const WheelSample> samples, double t_k, double t_k1) {
  if (!(t_k1 > t_k) || samples.size() < 2) return std::nullopt;
  const double period = (samples.back().stamp - samples.front().stamp) / static_cast<double>(samples.size() - 1);
  const double slack = 1e-9;
  if (samples.front().stamp > t_k + period + slack || samples.back().stamp < t_k1 - period - slack) {
    return std::nullopt;
  }

  auto rate_at = [&](double t) {
    if (t <= samples.front().stamp) return samples.front().w;
    if (t >= samples.back().stamp) return samples.back().w;
    const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                     [](double s, const WheelSample& w) { return s < w.stamp; });
    const WheelSample& b = *it;
    const WheelSample& a = *(it - 1);
    const double span = b.stamp - a.stamp;
    if (span <= 0.0) return b.w;
    return a.w + (b.w - a.w) * (t - a.stamp) / span;
  };

  double phi = 0.0;
  double t_prev = t_k;
  double w_prev = rate_at(t_k);
  for (const auto& s : samples) {
    if (s.stamp <= t_k) continue;
    if (s.stamp >= t_k1) break;
    if (s.stamp - t_prev > period * 1.5 + slack) return std::nullopt;
    phi += 0.5 * (w_prev + s.w) * (s.stamp - t_prev);
    t_prev = s.stamp;
    w_prev = s.w;
  }
  if (t_k1 - t_prev > period * 1.5 + slack) return std::nullopt;
  phi += 0.5 * (w_prev + rate_at(t_k1)) * (t_k1 - t_prev);
  return YawPreintegration{phi, t_k, t_k1};
}

Matrix3d predict_relative_rotation(const ImuState& imu, const CameraClone& clone_k, const CameraExtrinsics& cam,
                                   const WheelExtrinsics& wheel) {
  const Matrix3d R_Ik = clone_k.rot * cam.R_IC.transpose();
  return wheel.R_OI * R_Ik.transpose() * imu.rot * wheel.R_OI.transpose();
}

double wheel_rotation_residual(const ImuState& imu, const CameraClone& clone_k, const CameraExtrinsics& cam,
                               const WheelExtrinsics& wheel, double phi) {
  const Matrix3d R_rel = predict_relative_rotation(imu, clone_k, cam, wheel);
  return so3_log(Matrix3d(R_rel.transpose() * rot_z(phi))).z();
}

Linearization linearize_wheel_rotation(const FilterState& state, int clone_k, double phi, double variance,
                                       const CameraExtrinsics& cam, const WheelExtrinsics& wheel) {
  Linearization lin;
  lin.H = MatrixXd::Zero(1, state.dim());
  const Eigen::RowVector3d row = wheel.R_OI.row(2) * state.imu.rot.transpose();
  lin.H.block<1, 3>(0, kRotIdx) = row;
  lin.H.block<1, 3>(0, FilterState::clone_offset(clone_k)) = -row;
  lin.r = VectorXd::Constant(1, wheel_rotation_residual(state.imu, state.clones[clone_k], cam, wheel, phi));
  lin.R = MatrixXd::Constant(1, 1, variance);
  return lin;
}

Vector3d predict_wheel_velocity(const ImuState& imu, const Vector3d& omega_m, const WheelExtrinsics& wheel) {
  return wheel.R_OI * ((omega_m - imu.bg).cross(wheel.p_IO) + imu.rot.transpose() * imu.vel);
}

Linearization linearize_wheel_velocity(const FilterState& state, const WheelSample& sample, const Vector3d& omega_m,
                                       const WheelExtrinsics& wheel, double sigma_v, double sigma_nh) {
  const ImuState& imu = state.imu;
  Linearization lin;
  lin.H = MatrixXd::Zero(3, state.dim());
  const Matrix3d A = wheel.R_OI * imu.rot.transpose();
  lin.H.block<3, 3>(0, kVelIdx) = A;
  lin.H.block<3, 3>(0, kBgIdx) = wheel.R_OI * skew(wheel.p_IO);
  lin.H.block<3, 3>(0, kRotIdx) = A * (velocity_rotation_sensitivity(imu, state.mode) + skew(imu.vel));
  lin.r = Vector3d(sample.v, 0.0, 0.0) - predict_wheel_velocity(imu, omega_m, wheel);
  lin.R = Vector3d(sigma_v * sigma_v, sigma_nh * sigma_nh, sigma_nh * sigma_nh).asDiagonal();
  return lin;
}

Vector3d predict_plane(const ImuState& imu, const Matrix3d& plane_rot, const WheelExtrinsics& wheel) {
  const Matrix3d R_GO = imu.rot * wheel.R_OI.transpose();
  const Vector3d p_GO = imu.pos + imu.rot * wheel.p_IO;
  const Vector3d axis = plane_rot * R_GO.col(2);
  return Vector3d(axis.x(), axis.y(), plane_rot.row(2).dot(p_GO));
}

Linearization linearize_plane(const FilterState& state, const Matrix3d& plane_rot, const WheelExtrinsics& wheel,
                              double sigma_plane) {
  const ImuState& imu = state.imu;
  Linearization lin;
  lin.H = MatrixXd::Zero(3, state.dim());
  const Vector3d z_axis = imu.rot * wheel.R_OI.row(2).transpose();
  lin.H.block<2, 3>(0, kRotIdx) = -(plane_rot * skew(z_axis)).topRows<2>();
  const Vector3d lever = imu.rot * wheel.p_IO;
  lin.H.block<1, 3>(2, kRotIdx) =
      plane_rot.row(2) * (position_rotation_sensitivity(imu, state.mode) - skew(lever));
  lin.H.block<1, 3>(2, kPosIdx) = plane_rot.row(2);
  lin.r = -predict_plane(imu, plane_rot, wheel);
  lin.R = MatrixXd::Identity(3, 3) * (sigma_plane * sigma_plane);
  return lin;
}

UpdateResult wheel_rotation_update(FilterState& state, int clone_k, const YawPreintegration& preint, double variance,
                                   const CameraExtrinsics& cam, const WheelExtrinsics& wheel,
                                   const UpdateOptions& options) {
  const Linearization lin = linearize_wheel_rotation(state, clone_k, preint.phi, variance, cam, wheel);
  return kalman_update(state, lin.H, lin.r, lin.R, options);
}

UpdateResult wheel_velocity_update(FilterState& state, const WheelSample& sample, const Vector3d& omega_m,
                                   const WheelExtrinsics& wheel, double sigma_v, double sigma_nh,
                                   const UpdateOptions& options) {
  const Linearization lin = linearize_wheel_velocity(state, sample, omega_m, wheel, sigma_v, sigma_nh);
  return kalman_update(state, lin.H, lin.r, lin.R, options);
}

UpdateResult plane_update(FilterState& state, const Matrix3d& plane_rot, const WheelExtrinsics& wheel,
                          double sigma_plane, const UpdateOptions& options) {
  const Linearization lin = linearize_plane(state, plane_rot, wheel, sigma_plane);
  return kalman_update(state, lin.H, lin.r, lin.R, options);
}

}  // namespace viwo
