#include "viwo/retraction.hpp"

#include "viwo/lie.hpp"

#include <Eigen/Eigenvalues>

#include <stdexcept>

namespace viwo {

int FilterState::find_clone(double t, double tol) const {
  for (int i = 0; i < static_cast<int>(clones.size()); ++i) {
    if (std::abs(clones[i].stamp - t) <= tol) return i;
  }
  return -1;
}

bool covariance_is_valid(const MatrixXd& cov, double tol) {
  if (cov.rows() != cov.cols()) return false;
  if (!cov.allFinite()) return false;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * std::max(cov.trace(), 1e-300);
}

ImuState retract(const ImuState& nominal, const Vector15d& xi, ErrorMode mode) {
  const Vector3d th = xi.segment<3>(kRotIdx);
  const Vector3d dv = xi.segment<3>(kVelIdx);
  const Vector3d dp = xi.segment<3>(kPosIdx);
  const Matrix3d exp_th = so3_exp(th);

  ImuState out;
  out.rot = reorthonormalize<double>(exp_th * nominal.rot);
  out.bg = nominal.bg + xi.segment<3>(kBgIdx);
  out.ba = nominal.ba + xi.segment<3>(kBaIdx);
  switch (mode) {
    case ErrorMode::Standard:
      out.vel = nominal.vel + dv;
      out.pos = nominal.pos + dp;
      break;
    case ErrorMode::FullInvariant: {
      const Matrix3d jl = left_jacobian(th);
      out.vel = exp_th * nominal.vel + jl * dv;
      out.pos = exp_th * nominal.pos + jl * dp;
      break;
    }
    case ErrorMode::PartialInvariant:
      out.vel = exp_th * nominal.vel + left_jacobian(th) * dv;
      out.pos = nominal.pos + dp;
      break;
  }
  return out;
}

Vector15d local(const ImuState& state, const ImuState& nominal, ErrorMode mode) {
  Vector15d xi;
  const Vector3d th = so3_log(state.rot * nominal.rot.transpose());
  const Matrix3d exp_th = so3_exp(th);
  xi.segment<3>(kRotIdx) = th;
  xi.segment<3>(kBgIdx) = state.bg - nominal.bg;
  xi.segment<3>(kBaIdx) = state.ba - nominal.ba;
  switch (mode) {
    case ErrorMode::Standard:
      xi.segment<3>(kVelIdx) = state.vel - nominal.vel;
      xi.segment<3>(kPosIdx) = state.pos - nominal.pos;
      break;
    case ErrorMode::FullInvariant: {
      const Matrix3d jl_inv = left_jacobian_inverse(th);
      xi.segment<3>(kVelIdx) = jl_inv * (state.vel - exp_th * nominal.vel);
      xi.segment<3>(kPosIdx) = jl_inv * (state.pos - exp_th * nominal.pos);
      break;
    }
    case ErrorMode::PartialInvariant:
      xi.segment<3>(kVelIdx) = left_jacobian_inverse(th) * (state.vel - exp_th * nominal.vel);
      xi.segment<3>(kPosIdx) = state.pos - nominal.pos;
      break;
  }
  return xi;
}

CameraClone retract(const CameraClone& nominal, const Eigen::Matrix<double, 6, 1>& xi) {
  CameraClone out = nominal;
  out.rot = reorthonormalize<double>(so3_exp(xi.head<3>()) * nominal.rot);
  out.pos = nominal.pos + xi.tail<3>();
  return out;
}

Eigen::Matrix<double, 6, 1> local(const CameraClone& clone, const CameraClone& nominal) {
  Eigen::Matrix<double, 6, 1> xi;
  xi.head<3>() = so3_log(clone.rot * nominal.rot.transpose());
  xi.tail<3>() = clone.pos - nominal.pos;
  return xi;
}

void inject(FilterState& state, const VectorXd& delta) {
  if (delta.size() != state.dim()) {
    throw std::invalid_argument("inject: error vector has the wrong dimension");
  }
  state.imu = retract(state.imu, delta.head<kImuErrorDim>(), state.mode);
  for (int i = 0; i < static_cast<int>(state.clones.size()); ++i) {
    state.clones[i] = retract(state.clones[i], delta.segment<kCloneErrorDim>(FilterState::clone_offset(i)));
  }
}

VectorXd local(const FilterState& state, const FilterState& nominal) {
  if (state.clones.size() != nominal.clones.size()) {
    throw std::invalid_argument("local: clone windows differ");
  }
  VectorXd xi(nominal.dim());
  xi.head<kImuErrorDim>() = local(state.imu, nominal.imu, nominal.mode);
  for (int i = 0; i < static_cast<int>(nominal.clones.size()); ++i) {
    xi.segment<kCloneErrorDim>(FilterState::clone_offset(i)) = local(state.clones[i], nominal.clones[i]);
  }
  return xi;
}

Matrix3d velocity_rotation_sensitivity(const ImuState& nominal, ErrorMode mode) {
  if (mode == ErrorMode::Standard) return Matrix3d::Zero();
  return -skew(nominal.vel);
}

Matrix3d position_rotation_sensitivity(const ImuState& nominal, ErrorMode mode) {
  if (mode == ErrorMode::FullInvariant) return -skew(nominal.pos);
  return Matrix3d::Zero();
}

}  // namespace viwo
