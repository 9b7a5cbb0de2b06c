#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"

namespace viwo {

inline constexpr double kMaxPropagationStep = 0.1;

/// Noise-free IMU kinematics over `dt` with the sample held constant:
/// the rotation is integrated exactly, velocity and position with RK4.
/// Accepts any dt, including negative ones.
ImuState integrate_kinematics(const ImuState& imu, const Vector3d& omega, const Vector3d& accel,
                              const Vector3d& gravity, double dt);

/// One propagation step. Throws std::invalid_argument unless dt is in
/// (0, kMaxPropagationStep].
ImuState propagate_mean(const ImuState& imu, const ImuSample& sample, double dt,
                        const Vector3d& gravity = kGravity);

/// Continuous-time error dynamics  d(xi)/dt = F xi + G n,  n = (n_g, n_wg, n_a, n_wa).
///
/// Standard mode needs the bias-corrected specific force, hence the sample.
struct ErrorMatrices {
  Matrix15d F;
  Matrix15x12d G;
};

ErrorMatrices error_matrices(const FilterState& state, const ImuSample& sample);

/// Diagonal continuous noise covariance in the order of G's columns.
Eigen::Matrix<double, 12, 12> continuous_noise(const NoiseParams& noise);

/// Phi = I + F dt + (F dt)^2 / 2; the IMU block gets Phi P Phi^T plus the
/// trapezoidal noise term (Phi G Qc G^T Phi^T + G Qc G^T) dt / 2, and the
/// IMU-clone cross terms get Phi on the IMU side.
void propagate_covariance(FilterState& state, const Matrix15d& F, const Matrix15x12d& G,
                          const NoiseParams& noise, double dt);

/// Mean and covariance together, linearized at the state before the step.
void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseParams& noise);

}  // namespace viwo
