#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/simulator.hpp"
#include "viwo/types.hpp"
#include "viwo/visual.hpp"
#include "viwo/wheel_plane.hpp"

#include <deque>
#include <map>
#include <set>
#include <vector>

namespace viwo {

struct EstimatorOptions {
  ErrorMode mode = ErrorMode::PartialInvariant;
  NoiseParams noise;
  CameraIntrinsics intrinsics;
  CameraExtrinsics camera = forward_camera();
  WheelExtrinsics wheel;
  Matrix3d plane_rot = Matrix3d::Identity();
  int max_clones = 11;
  int min_track_length = 3;
  double gate_probability = 0.95;
  double wheel_rate = 100.0;

  bool use_wheel_rotation = true;
  bool use_wheel_velocity = true;
  bool use_plane = true;
  bool use_outlier_detection = true;
  OutlierDetectorOptions detector;
};

struct EstimatorStats {
  long frames = 0;
  long visual_updates = 0;
  long features_used = 0;
  long features_gated = 0;
  long rotation_updates = 0;
  long rotation_rejected = 0;
  long velocity_updates = 0;
  long velocity_rejected = 0;
  long plane_updates = 0;
  long plane_rejected = 0;
  long outliers_flagged = 0;
};

/// Event-driven sliding-window filter. Events must arrive in time order;
/// at equal stamps feed IMU first, then wheel, then camera.
class Estimator {
 public:
  Estimator(const EstimatorOptions& options, const ImuState& initial, const MatrixXd& initial_cov, double stamp);

  void add_imu(const ImuSample& sample);
  void add_wheel(const WheelSample& sample);
  void add_frame(const CameraFrame& frame);

  const FilterState& state() const { return state_; }
  const EstimatorStats& stats() const { return stats_; }
  const EstimatorOptions& options() const { return options_; }
  /// Ids flagged dynamic in the most recent frame.
  const std::vector<FeatureId>& last_flagged() const { return last_flagged_; }

 private:
  void propagate_to(double stamp);
  void detect_dynamic(CameraFrame& frame);
  void run_visual_update(const CameraFrame& frame);

  EstimatorOptions options_;
  FilterState state_;
  EstimatorStats stats_;
  std::optional<ImuSample> last_imu_;
  Vector3d omega_sum_ = Vector3d::Zero();  // raw gyro readings since the last frame
  int omega_count_ = 0;
  std::deque<WheelSample> wheel_buffer_;
  std::map<FeatureId, FeatureTrack> tracks_;
  std::map<FeatureId, Vector3d> landmarks_;
  std::vector<FeatureId> last_flagged_;
  std::optional<CameraFrame> last_frame_;
};

/// Replays a whole stream, invoking `on_frame` after each camera frame.
template <typename Callback>
void replay(Estimator& estimator, const MeasurementStream& stream, Callback&& on_frame) {
  std::size_t i = 0, w = 0;
  for (const auto& frame : stream.frames) {
    while (true) {
      const bool imu_ready = i < stream.imu.size() && stream.imu[i].stamp <= frame.stamp;
      const bool wheel_ready = w < stream.wheel.size() && stream.wheel[w].stamp <= frame.stamp;
      if (!imu_ready && !wheel_ready) break;
      if (imu_ready && (!wheel_ready || stream.imu[i].stamp <= stream.wheel[w].stamp)) {
        estimator.add_imu(stream.imu[i++]);
      } else {
        estimator.add_wheel(stream.wheel[w++]);
      }
    }
    estimator.add_frame(frame);
    on_frame(frame);
  }
}

}  // namespace viwo
