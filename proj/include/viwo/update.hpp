#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"

#include <span>

namespace viwo {

struct UpdateOptions {
  bool gate = true;
  double gate_probability = 0.95;
};

struct UpdateResult {
  bool accepted = false;
  bool singular = false;  // innovation covariance not invertible
  double mahalanobis = 0.0;
  double threshold = 0.0;
};

/// EKF update with residual r = H xi + noise.
///
/// The correction K r is injected through the state's retraction and the
/// covariance is updated in Joseph form.
UpdateResult kalman_update(FilterState& state, const MatrixXd& H, const VectorXd& r, const MatrixXd& R,
                           const UpdateOptions& options = {});

/// Thin QR of [H r] for isotropic noise: returns an equivalent system with
/// at most dim rows. A no-op when H already has fewer rows than columns.
void compress_measurement(MatrixXd& H, VectorXd& r);

/// 6 x dim Jacobian of a new clone's error with respect to the current error.
MatrixXd augmentation_jacobian(const FilterState& state, const CameraExtrinsics& extrinsics);

/// Appends the current camera pose to the window.
/// Throws std::length_error if the window already holds `max_clones`.
void augment_clone(FilterState& state, const CameraExtrinsics& extrinsics, double stamp, int max_clones);

/// Removes the given clones together with their covariance rows and columns.
/// Throws if an index is invalid or the window would become empty.
void marginalize_clones(FilterState& state, std::span<const int> indices);

}  // namespace viwo
