#include "viwo/update.hpp"

#include "viwo/chi2.hpp"
#include "viwo/lie.hpp"
#include "viwo/retraction.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace viwo {

UpdateResult kalman_update(FilterState& state, const MatrixXd& H, const VectorXd& r, const MatrixXd& R,
                           const UpdateOptions& options) {
  const int n = state.dim();
  const int m = static_cast<int>(r.size());
  if (H.rows() != m || H.cols() != n || R.rows() != m || R.cols() != m) {
    throw std::invalid_argument("kalman_update: inconsistent dimensions");
  }
  UpdateResult result;
  if (m == 0) return result;

  MatrixXd& P = state.cov;
  const MatrixXd PHt = P * H.transpose();
  MatrixXd S = H * PHt + R;
  S = 0.5 * (S + S.transpose());

  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    result.singular = true;
    return result;
  }
  result.mahalanobis = r.dot(llt.solve(r));
  if (options.gate) {
    result.threshold = chi2_quantile(options.gate_probability, m);
    if (!(result.mahalanobis <= result.threshold)) return result;
  }

  // K = P H^T S^-1
  const MatrixXd K = llt.solve(PHt.transpose()).transpose();
  const VectorXd delta = K * r;

  // Joseph form (I - KH) P (I - KH)^T + K R K^T, expanded so that only
  // n x n x m products are needed.
  const MatrixXd KHP = K * PHt.transpose();
  MatrixXd updated = P - KHP - KHP.transpose() + K * S * K.transpose();
  P = 0.5 * (updated + updated.transpose());

  inject(state, delta);
  result.accepted = true;
  return result;
}

void compress_measurement(MatrixXd& H, VectorXd& r) {
  const int m = static_cast<int>(H.rows());
  const int n = static_cast<int>(H.cols());
  if (m <= n) return;
  MatrixXd stacked(m, n + 1);
  stacked << H, r;
  Eigen::HouseholderQR<MatrixXd> qr(stacked);
  const MatrixXd upper = qr.matrixQR().topRows(n + 1).triangularView<Eigen::Upper>();
  // Row n only carries the part of r outside range(H); it holds no information on the state.
  H = upper.topLeftCorner(n, n);
  r = upper.topRightCorner(n, 1);
}

MatrixXd augmentation_jacobian(const FilterState& state, const CameraExtrinsics& extrinsics) {
  MatrixXd J = MatrixXd::Zero(kCloneErrorDim, state.dim());
  const Vector3d lever = state.imu.rot * extrinsics.p_IC;
  J.block<3, 3>(0, kRotIdx).setIdentity();
  J.block<3, 3>(3, kRotIdx) = -skew(lever) + position_rotation_sensitivity(state.imu, state.mode);
  J.block<3, 3>(3, kPosIdx).setIdentity();
  return J;
}

void augment_clone(FilterState& state, const CameraExtrinsics& extrinsics, double stamp, int max_clones) {
  if (static_cast<int>(state.clones.size()) >= max_clones) {
    throw std::length_error("augment_clone: clone window is full");
  }
  const MatrixXd J = augmentation_jacobian(state, extrinsics);
  const int n = state.dim();
  const MatrixXd PJt = state.cov * J.transpose();

  MatrixXd P(n + kCloneErrorDim, n + kCloneErrorDim);
  P.topLeftCorner(n, n) = state.cov;
  P.topRightCorner(n, kCloneErrorDim) = PJt;
  P.bottomLeftCorner(kCloneErrorDim, n) = PJt.transpose();
  const Eigen::Matrix<double, 6, 6> Pcc = J * PJt;
  P.bottomRightCorner<kCloneErrorDim, kCloneErrorDim>() = 0.5 * (Pcc + Pcc.transpose());
  state.cov = std::move(P);

  CameraClone clone;
  clone.rot = reorthonormalize<double>(state.imu.rot * extrinsics.R_IC);
  clone.pos = state.imu.pos + state.imu.rot * extrinsics.p_IC;
  clone.stamp = stamp;
  state.clones.push_back(clone);
}

void marginalize_clones(FilterState& state, std::span<const int> indices) {
  const int nc = static_cast<int>(state.clones.size());
  std::vector<bool> drop(nc, false);
  for (int idx : indices) {
    if (idx < 0 || idx >= nc) throw std::out_of_range("marginalize_clones: bad clone index");
    drop[idx] = true;
  }
  const int remaining = static_cast<int>(std::count(drop.begin(), drop.end(), false));
  if (remaining == 0 && nc > 0) {
    throw std::invalid_argument("marginalize_clones: cannot remove every clone");
  }
  if (remaining == nc) return;

  std::vector<int> keep;
  keep.reserve(kImuErrorDim + kCloneErrorDim * remaining);
  for (int i = 0; i < kImuErrorDim; ++i) keep.push_back(i);
  std::vector<CameraClone> clones;
  for (int c = 0; c < nc; ++c) {
    if (drop[c]) continue;
    clones.push_back(state.clones[c]);
    for (int i = 0; i < kCloneErrorDim; ++i) keep.push_back(FilterState::clone_offset(c) + i);
  }
  state.cov = state.cov(keep, keep).eval();
  state.clones = std::move(clones);
}

}  // namespace viwo
