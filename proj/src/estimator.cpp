#include "viwo/estimator.hpp"

#include "viwo/lie.hpp"
#include "viwo/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace viwo {

Estimator::Estimator(const EstimatorOptions& options, const ImuState& initial, const MatrixXd& initial_cov,
                     double stamp)
    : options_(options) {
  if (initial_cov.rows() != kImuErrorDim || initial_cov.cols() != kImuErrorDim) {
    throw std::invalid_argument("Estimator: initial covariance must be 15 x 15");
  }
  if (options_.max_clones < 2) throw std::invalid_argument("Estimator: window needs at least two clones");
  state_.imu = initial;
  state_.cov = initial_cov;
  state_.mode = options.mode;
  state_.stamp = stamp;
}

void Estimator::propagate_to(double stamp) {
  if (!last_imu_) {
    state_.stamp = std::max(state_.stamp, stamp);
    return;
  }
  while (stamp - state_.stamp > 1e-12) {
    const double dt = std::min(stamp - state_.stamp, kMaxPropagationStep);
    propagate(state_, *last_imu_, dt, options_.noise);
  }
  state_.stamp = std::max(state_.stamp, stamp);
}

void Estimator::add_imu(const ImuSample& sample) {
  if (last_imu_ && sample.stamp <= last_imu_->stamp) {
    throw std::invalid_argument("Estimator: IMU stamps must increase");
  }
  propagate_to(sample.stamp);
  last_imu_ = sample;
  omega_sum_ += sample.omega;
  ++omega_count_;
}

void Estimator::add_wheel(const WheelSample& sample) {
  propagate_to(sample.stamp);
  wheel_buffer_.push_back(sample);
  const double keep_from =
      state_.clones.empty() ? sample.stamp - 1.0 : state_.clones.back().stamp - 2.0 / options_.wheel_rate;
  while (wheel_buffer_.size() > 2 && wheel_buffer_[1].stamp <= keep_from) wheel_buffer_.pop_front();

  if (!options_.use_wheel_velocity || !last_imu_) return;
  UpdateOptions gate{true, options_.gate_probability};
  const auto result = wheel_velocity_update(state_, sample, last_imu_->omega, options_.wheel,
                                            options_.noise.sigma_wheel_v, kNonHolonomicSigma, gate);
  (result.accepted ? stats_.velocity_updates : stats_.velocity_rejected)++;
}

void Estimator::detect_dynamic(CameraFrame& frame) {
  last_flagged_.clear();
  if (!options_.use_outlier_detection || !last_frame_ || !last_imu_ || state_.clones.empty()) return;
  const CameraClone& prev = state_.clones.back();
  const double dt = frame.stamp - prev.stamp;
  if (dt <= 0.0) return;

  std::map<FeatureId, Vector2d> previous(last_frame_->features.begin(), last_frame_->features.end());
  std::vector<FeaturePair> pairs;
  for (const auto& [id, z] : frame.features) {
    const auto it = previous.find(id);
    if (it == previous.end()) continue;
    std::optional<Vector3d> landmark;
    if (const auto lm = landmarks_.find(id); lm != landmarks_.end()) {
      landmark = lm->second;
    } else if (const auto tr = tracks_.find(id); tr != tracks_.end() && tr->second.observations.size() >= 2) {
      if (const auto tri = triangulate(tr->second, state_.clones)) landmark = tri->pos;
    }
    if (!landmark) continue;
    const double depth = (prev.rot.transpose() * (*landmark - prev.pos)).z();
    if (depth <= 0.0) continue;
    pairs.push_back({id, it->second, z, depth});
  }

  OutlierDetectorOptions opts = options_.detector;
  const double px = options_.noise.sigma_px / options_.intrinsics.focal;
  opts.min_threshold = std::max(opts.min_threshold, 3.0 * std::sqrt(2.0) * px / dt);
  const Vector3d omega = omega_sum_ / std::max(omega_count_, 1) - state_.imu.bg;
  const Vector3d v_C = state_.imu.vel + state_.imu.rot * omega.cross(options_.camera.p_IC);
  // The mean raw gyro over one frame is too noisy for the rate gate; the
  // corrected rotation between the last two clones is not.
  Vector3d gate_rate = omega;
  if (const std::size_t n = state_.clones.size(); n >= 2) {
    const CameraClone& a = state_.clones[n - 2];
    if (prev.stamp - a.stamp > 0.0) {
      gate_rate = so3_log(Matrix3d(a.rot.transpose() * prev.rot)) / (prev.stamp - a.stamp);
    }
  }
  const auto detection = detect_outliers(pairs, prev.rot, v_C, gate_rate, dt, opts);
  if (detection.skipped || detection.flagged.empty()) return;

  last_flagged_ = detection.flagged;
  stats_.outliers_flagged += static_cast<long>(detection.flagged.size());
  const std::set<FeatureId> flagged(detection.flagged.begin(), detection.flagged.end());
  std::erase_if(frame.features, [&](const auto& f) { return flagged.count(f.first) > 0; });
  for (FeatureId id : flagged) {
    tracks_.erase(id);
    landmarks_.erase(id);
  }
}

void Estimator::run_visual_update(const CameraFrame& frame) {
  std::set<FeatureId> seen;
  for (const auto& f : frame.features) seen.insert(f.first);

  const bool window_full = static_cast<int>(state_.clones.size()) > options_.max_clones;
  const double oldest = state_.clones.front().stamp;
  std::vector<FeatureTrack> finished;
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    const FeatureTrack& track = it->second;
    const bool lost = seen.count(it->first) == 0;
    const bool spans_oldest = window_full && track.observations.front().stamp <= oldest + 1e-9;
    if (lost || spans_oldest) {
      if (static_cast<int>(track.observations.size()) >= options_.min_track_length) finished.push_back(track);
      it = tracks_.erase(it);
    } else {
      ++it;
    }
  }
  if (finished.empty()) return;

  VisualUpdateOptions vopts;
  vopts.pixel_sigma = options_.noise.sigma_px / options_.intrinsics.focal;
  vopts.gate_probability = options_.gate_probability;
  const auto result = visual_update(state_, finished, vopts);
  for (const auto& [id, pos] : result.landmarks) landmarks_[id] = pos;
  stats_.features_used += result.used;
  stats_.features_gated += result.gated_out;
  if (result.applied) ++stats_.visual_updates;
}

void Estimator::add_frame(const CameraFrame& input) {
  propagate_to(input.stamp);
  ++stats_.frames;
  CameraFrame frame = input;

  detect_dynamic(frame);

  if (options_.use_wheel_rotation && !state_.clones.empty()) {
    const int k = static_cast<int>(state_.clones.size()) - 1;
    std::vector<WheelSample> samples(wheel_buffer_.begin(), wheel_buffer_.end());
    if (const auto preint = preintegrate_yaw(samples, state_.clones[k].stamp, frame.stamp)) {
      const double var =
          yaw_variance(options_.noise.sigma_wheel_w, 1.0 / options_.wheel_rate, preint->t_k1 - preint->t_k);
      UpdateOptions gate{true, options_.gate_probability};
      const auto r = wheel_rotation_update(state_, k, *preint, var, options_.camera, options_.wheel, gate);
      (r.accepted ? stats_.rotation_updates : stats_.rotation_rejected)++;
    }
  }

  augment_clone(state_, options_.camera, frame.stamp, options_.max_clones + 1);
  for (const auto& [id, z] : frame.features) {
    tracks_[id].id = id;
    tracks_[id].observations.push_back({frame.stamp, z});
  }
  run_visual_update(frame);

  if (static_cast<int>(state_.clones.size()) > options_.max_clones) {
    const double stamp = state_.clones.front().stamp;
    const int oldest[] = {0};
    marginalize_clones(state_, oldest);
    for (auto& [id, track] : tracks_) {
      std::erase_if(track.observations, [&](const auto& o) { return std::abs(o.stamp - stamp) <= 1e-9; });
    }
  }

  if (options_.use_plane) {
    UpdateOptions gate{true, options_.gate_probability};
    const auto r = plane_update(state_, options_.plane_rot, options_.wheel, options_.noise.sigma_plane, gate);
    (r.accepted ? stats_.plane_updates : stats_.plane_rejected)++;
  }

  // Triangulated landmarks serve as detector depth hints while visible.
  std::set<FeatureId> visible;
  for (const auto& f : frame.features) visible.insert(f.first);
  std::erase_if(landmarks_, [&](const auto& lm) { return visible.count(lm.first) == 0; });
  last_frame_ = std::move(frame);
  omega_sum_.setZero();
  omega_count_ = 0;
}

}  // namespace viwo
