#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace viwo {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Below this angle (rad) exp, log and the left Jacobian switch to their
/// second-order series.
inline constexpr double kSmallAngle = 1e-7;

/// Within this distance of pi, so3_log extracts the axis from the symmetric
/// part of R instead of dividing by sin(theta).
inline constexpr double kNearPi = 1e-3;

/// Cross-product matrix: skew(v) * w == v.cross(w).
template <typename Derived>
Matrix3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& v) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3);
  using Scalar = typename Derived::Scalar;
  Matrix3<Scalar> m;
  m << Scalar(0), -v(2), v(1),
       v(2), Scalar(0), -v(0),
       -v(1), v(0), Scalar(0);
  return m;
}

/// Inverse of skew on the antisymmetric part of m.
template <typename Derived>
Vector3<typename Derived::Scalar> vee(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return Vector3<Scalar>(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * Scalar(0.5);
}

/// Rodrigues' formula.
template <typename Derived>
Matrix3<typename Derived::Scalar> so3_exp(const Eigen::MatrixBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  const Scalar theta = phi.norm();
  const Matrix3<Scalar> k = skew(phi);
  if (theta < Scalar(kSmallAngle)) {
    return Matrix3<Scalar>::Identity() + k + Scalar(0.5) * k * k;
  }
  const Scalar half_sin = std::sin(theta / Scalar(2));
  const Scalar a = std::sin(theta) / theta;
  const Scalar b = Scalar(2) * half_sin * half_sin / (theta * theta);
  return Matrix3<Scalar>::Identity() + a * k + b * k * k;
}

/// Principal rotation vector, norm in [0, pi].
///
/// At an angle of exactly pi the axis sign is ambiguous; the first nonzero
/// component is made positive.
template <typename Derived>
Vector3<typename Derived::Scalar> so3_log(const Eigen::MatrixBase<Derived>& rot) {
  using Scalar = typename Derived::Scalar;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Vector3<Scalar> w = vee(rot);
  const Scalar cos_theta = std::clamp((rot.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  const Scalar sin_theta = w.norm();
  const Scalar theta = std::atan2(sin_theta, cos_theta);

  if (theta < Scalar(kSmallAngle)) {
    return w;
  }
  if (pi - theta > Scalar(kNearPi)) {
    return w * (theta / sin_theta);
  }

  // (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) a a^T
  const Matrix3<Scalar> sym = Scalar(0.5) * (rot + rot.transpose());
  const Matrix3<Scalar> aat = (sym - cos_theta * Matrix3<Scalar>::Identity()) / (Scalar(1) - cos_theta);
  int i = 0;
  aat.diagonal().maxCoeff(&i);
  Vector3<Scalar> axis = aat.col(i) / std::sqrt(std::max(aat(i, i), Scalar(0)));
  axis.normalize();
  const Scalar along = axis.dot(w);
  if (std::abs(along) > Scalar(10) * std::numeric_limits<Scalar>::epsilon()) {
    if (along < Scalar(0)) axis = -axis;
  } else {
    for (int j = 0; j < 3; ++j) {
      if (std::abs(axis(j)) > Scalar(1e-12)) {
        if (axis(j) < Scalar(0)) axis = -axis;
        break;
      }
    }
  }
  return axis * theta;
}

/// Left Jacobian of SO(3): exp(phi + d) ~= exp(J_l(phi) d) exp(phi).
template <typename Derived>
Matrix3<typename Derived::Scalar> left_jacobian(const Eigen::MatrixBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  const Scalar theta = phi.norm();
  const Matrix3<Scalar> k = skew(phi);
  if (theta < Scalar(kSmallAngle)) {
    return Matrix3<Scalar>::Identity() + Scalar(0.5) * k + k * k / Scalar(6);
  }
  const Scalar half_sin = std::sin(theta / Scalar(2));
  const Scalar theta2 = theta * theta;
  const Scalar a = Scalar(2) * half_sin * half_sin / theta2;
  const Scalar b = (theta - std::sin(theta)) / (theta2 * theta);
  return Matrix3<Scalar>::Identity() + a * k + b * k * k;
}

template <typename Derived>
Matrix3<typename Derived::Scalar> left_jacobian_inverse(const Eigen::MatrixBase<Derived>& phi) {
  using Scalar = typename Derived::Scalar;
  const Scalar theta = phi.norm();
  const Matrix3<Scalar> k = skew(phi);
  if (theta < Scalar(kSmallAngle)) {
    return Matrix3<Scalar>::Identity() - Scalar(0.5) * k + k * k / Scalar(12);
  }
  const Scalar half = theta / Scalar(2);
  const Scalar c = (Scalar(1) - half * std::cos(half) / std::sin(half)) / (theta * theta);
  return Matrix3<Scalar>::Identity() - Scalar(0.5) * k + c * k * k;
}

/// Rotation about the z axis.
template <typename Scalar>
Matrix3<Scalar> rot_z(Scalar yaw) {
  const Scalar c = std::cos(yaw);
  const Scalar s = std::sin(yaw);
  Matrix3<Scalar> r;
  r << c, -s, Scalar(0),
       s, c, Scalar(0),
       Scalar(0), Scalar(0), Scalar(1);
  return r;
}

/// Projects a nearly orthonormal matrix back onto SO(3) when its drift
/// exceeds the tolerance.
template <typename Scalar>
Matrix3<Scalar> reorthonormalize(const Matrix3<Scalar>& rot, Scalar tol = Scalar(1e-10)) {
  const Scalar drift = (rot.transpose() * rot - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  if (drift <= tol) return rot;
  Eigen::Quaternion<Scalar> q(rot);
  q.normalize();
  return q.toRotationMatrix();
}

// Quaternion conversions are only used at file boundaries.
template <typename Scalar>
Eigen::Quaternion<Scalar> to_quaternion(const Matrix3<Scalar>& rot) {
  Eigen::Quaternion<Scalar> q(rot);
  q.normalize();
  if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
  return q;
}

template <typename Scalar>
Matrix3<Scalar> from_quaternion(const Eigen::Quaternion<Scalar>& q) {
  return q.normalized().toRotationMatrix();
}

}  // namespace viwo
