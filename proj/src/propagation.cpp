#include "viwo/propagation.hpp"

#include "viwo/lie.hpp"

#include <cmath>
#include <stdexcept>

namespace viwo {

ImuState integrate_kinematics(const ImuState& imu, const Vector3d& omega, const Vector3d& accel,
                              const Vector3d& gravity, double dt) {
  const Vector3d w = omega - imu.bg;
  const Vector3d a = accel - imu.ba;

  // R(s) = R0 exp(w s) is exact for a constant rate, so only v and p need RK4.
  auto world_accel = [&](double s) -> Vector3d {
    return imu.rot * (so3_exp(Vector3d(w * s)) * a) + gravity;
  };
  const Vector3d a0 = world_accel(0.0);
  const Vector3d a_mid = world_accel(0.5 * dt);
  const Vector3d a1 = world_accel(dt);

  const Vector3d k1v = a0;
  const Vector3d k1p = imu.vel;
  const Vector3d k2v = a_mid;
  const Vector3d k2p = imu.vel + 0.5 * dt * k1v;
  const Vector3d k3v = a_mid;
  const Vector3d k3p = imu.vel + 0.5 * dt * k2v;
  const Vector3d k4v = a1;
  const Vector3d k4p = imu.vel + dt * k3v;

  ImuState out = imu;
  out.rot = reorthonormalize<double>(imu.rot * so3_exp(Vector3d(w * dt)));
  out.vel = imu.vel + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  out.pos = imu.pos + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
  return out;
}

ImuState propagate_mean(const ImuState& imu, const ImuSample& sample, double dt, const Vector3d& gravity) {
  if (!(dt > 0.0) || dt > kMaxPropagationStep) {
    throw std::invalid_argument("propagate_mean: dt must be in (0, 0.1]");
  }
  return integrate_kinematics(imu, sample.omega, sample.accel, gravity, dt);
}

ErrorMatrices error_matrices(const FilterState& state, const ImuSample& sample) {
  const ImuState& x = state.imu;
  const Matrix3d& R = x.rot;
  const Matrix3d I3 = Matrix3d::Identity();

  ErrorMatrices m;
  m.F.setZero();
  m.G.setZero();

  // Rows: rot, vel, pos, bg, ba.  G columns: n_g, n_wg, n_a, n_wa.
  m.F.block<3, 3>(kRotIdx, kBgIdx) = -R;
  m.G.block<3, 3>(kRotIdx, 0) = R;
  m.G.block<3, 3>(kBgIdx, 3) = I3;
  m.G.block<3, 3>(kBaIdx, 9) = I3;
  m.F.block<3, 3>(kVelIdx, kBaIdx) = -R;
  m.G.block<3, 3>(kVelIdx, 6) = R;
  m.F.block<3, 3>(kPosIdx, kVelIdx) = I3;

  switch (state.mode) {
    case ErrorMode::Standard: {
      const Vector3d f_world = R * (sample.accel - x.ba);
      m.F.block<3, 3>(kVelIdx, kRotIdx) = -skew(f_world);
      break;
    }
    case ErrorMode::FullInvariant: {
      const Matrix3d vx_R = skew(x.vel) * R;
      const Matrix3d px_R = skew(x.pos) * R;
      m.F.block<3, 3>(kVelIdx, kRotIdx) = skew(state.gravity);
      m.F.block<3, 3>(kVelIdx, kBgIdx) = -vx_R;
      m.F.block<3, 3>(kPosIdx, kBgIdx) = -px_R;
      m.G.block<3, 3>(kVelIdx, 0) = vx_R;
      m.G.block<3, 3>(kPosIdx, 0) = px_R;
      break;
    }
    case ErrorMode::PartialInvariant: {
      const Matrix3d vx_R = skew(x.vel) * R;
      m.F.block<3, 3>(kVelIdx, kRotIdx) = skew(state.gravity);
      m.F.block<3, 3>(kVelIdx, kBgIdx) = -vx_R;
      m.F.block<3, 3>(kPosIdx, kRotIdx) = -skew(x.vel);
      m.G.block<3, 3>(kVelIdx, 0) = vx_R;
      break;
    }
  }
  return m;
}

Eigen::Matrix<double, 12, 12> continuous_noise(const NoiseParams& noise) {
  Eigen::Matrix<double, 12, 1> d;
  d << Vector3d::Constant(noise.sigma_g * noise.sigma_g), Vector3d::Constant(noise.sigma_wg * noise.sigma_wg),
      Vector3d::Constant(noise.sigma_a * noise.sigma_a), Vector3d::Constant(noise.sigma_wa * noise.sigma_wa);
  return d.asDiagonal();
}

void propagate_covariance(FilterState& state, const Matrix15d& F, const Matrix15x12d& G,
                          const NoiseParams& noise, double dt) {
  const Matrix15d Fdt = F * dt;
  const Matrix15d Phi = Matrix15d::Identity() + Fdt + 0.5 * Fdt * Fdt;
  const Matrix15d GQG = G * continuous_noise(noise) * G.transpose();
  const Matrix15d Qd = 0.5 * dt * (Phi * GQG * Phi.transpose() + GQG);

  MatrixXd& P = state.cov;
  const int n = state.dim();
  const int nc = n - kImuErrorDim;
  const Matrix15d Pii = P.topLeftCorner<kImuErrorDim, kImuErrorDim>();
  P.topLeftCorner<kImuErrorDim, kImuErrorDim>() = Phi * Pii * Phi.transpose() + Qd;
  if (nc > 0) {
    const MatrixXd Pic = Phi * P.topRightCorner(kImuErrorDim, nc);
    P.topRightCorner(kImuErrorDim, nc) = Pic;
    P.bottomLeftCorner(nc, kImuErrorDim) = Pic.transpose();
  }
  const Matrix15d sym = 0.5 * (P.topLeftCorner<kImuErrorDim, kImuErrorDim>() +
                               P.topLeftCorner<kImuErrorDim, kImuErrorDim>().transpose());
  P.topLeftCorner<kImuErrorDim, kImuErrorDim>() = sym;
}

void propagate(FilterState& state, const ImuSample& sample, double dt, const NoiseParams& noise) {
  const ErrorMatrices m = error_matrices(state, sample);
  state.imu = propagate_mean(state.imu, sample, dt, state.gravity);
  propagate_covariance(state, m.F, m.G, noise, dt);
  state.stamp += dt;
}

}  // namespace viwo
