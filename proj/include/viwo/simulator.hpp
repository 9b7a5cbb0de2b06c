#pragma once

#include "viwo/types.hpp"
#include "viwo/visual.hpp"
#include "viwo/wheel_plane.hpp"

#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace viwo {

/// Two-frame dynamic-feature scenario.
struct DynamicSceneConfig {
  int n_static = 100;
  int n_dynamic = 20;
  double sigma_v = 20.0;           // per axis
  bool sigma_v_per_frame = false;  // true: sigma_v is a displacement per frame interval (m)
  double omega0 = 0.0;             // rad/s yaw rate
  double speed = 15.0;             // m/s
  double min_depth = 8.0;
  double max_depth = 40.0;
};

struct SimConfig {
  double radius = 25.0;
  double speed = 5.0;
  double imu_rate = 100.0;
  double wheel_rate = 100.0;
  double cam_rate = 10.0;
  int n_landmarks = 360;
  NoiseParams noise;
  double duration = 2.0 * 2.0 * std::numbers::pi * 25.0 / 5.0;  // two loops
  std::uint64_t seed = 1;
  bool add_noise = true;

  double ring_offset = 0.1;  // landmark rings at radius * (1 -/+ ring_offset)
  double min_height = -2.0;
  double max_height = 4.0;
  double min_depth = 0.5;
  double max_depth = 40.0;
  CameraIntrinsics intrinsics;
  CameraExtrinsics camera = forward_camera();
  WheelExtrinsics wheel;
  double initial_bias = 0.001;

  /// Landmarks moving at constant velocity; ids start at kMovingIdBase.
  int n_moving_landmarks = 0;
  double moving_speed = 2.0;

  std::optional<DynamicSceneConfig> dynamic;

  bool valid() const;
  double omega() const { return speed / radius; }
  Vector3d circle_center() const { return Vector3d(0.0, radius, 0.0); }
};

inline constexpr FeatureId kMovingIdBase = 1000000;

struct TruthSample {
  double stamp = 0.0;
  Matrix3d rot = Matrix3d::Identity();
  Vector3d pos = Vector3d::Zero();
  Vector3d vel = Vector3d::Zero();
  Vector3d omega = Vector3d::Zero();      // body frame
  Vector3d accel = Vector3d::Zero();      // world-frame acceleration
};

/// Constant-speed circle in the z = 0 plane starting at the origin heading +x.
struct GroundTruth {
  double radius = 25.0;
  double speed = 5.0;
  std::vector<TruthSample> samples;  // at the IMU rate

  TruthSample at(double t) const;
};

GroundTruth generate_trajectory(const SimConfig& cfg);

struct Landmark {
  FeatureId id = 0;
  Vector3d pos = Vector3d::Zero();
  Vector3d vel = Vector3d::Zero();

  Vector3d at(double t) const { return pos + vel * t; }
};

/// Two rings around the circle's center with uniform angular spacing and
/// random heights; moving landmarks (if any) are appended.
std::vector<Landmark> generate_landmarks(const SimConfig& cfg);

struct CameraFrame {
  double stamp = 0.0;
  std::vector<std::pair<FeatureId, Vector2d>> features;  // normalized coordinates
};

struct MeasurementStream {
  ImuState initial;  // true state at t = 0
  std::vector<ImuSample> imu;
  std::vector<WheelSample> wheel;
  std::vector<CameraFrame> frames;
  std::vector<Vector3d> true_bg;  // per IMU sample
  std::vector<Vector3d> true_ba;
  std::vector<FeatureId> moving_ids;
};

/// Noise is drawn from `noise_seed` (cfg.seed when absent). IMU samples
/// carry white noise with per-sample std sigma * sqrt(rate); wheel and
/// pixel sigmas are per-sample standard deviations.
MeasurementStream synthesize_measurements(const SimConfig& cfg, const GroundTruth& gt,
                                          const std::vector<Landmark>& landmarks,
                                          std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Visible landmark projections for a camera pose; returns normalized coordinates.
std::vector<std::pair<FeatureId, Vector2d>> observe(const std::vector<Landmark>& landmarks, const Matrix3d& R_GC,
                                                    const Vector3d& p_GC, double t, const SimConfig& cfg);

struct DynamicScene {
  double dt = 0.1;
  Matrix3d R_GC = Matrix3d::Identity();  // first camera
  Vector3d v_C = Vector3d::Zero();       // first camera's world velocity
  Vector3d omega = Vector3d::Zero();     // body rate
  std::vector<FeaturePair> pairs;        // depths are true first-frame depths
  std::vector<FeatureId> dynamic_ids;
  std::vector<FeatureId> static_ids;
};

/// Features seen over one camera interval while the vehicle drives
/// straight (or along an omega0 arc). Dynamic features move at a random
/// constant velocity. Only features visible in both frames are kept.
DynamicScene synthesize_dynamic_scene(const SimConfig& cfg, std::uint64_t seed);

/// Deterministic RNG for a (seed, stream) pair.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace viwo
