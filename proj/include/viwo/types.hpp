#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace viwo {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

using Matrix15d = Eigen::Matrix<double, 15, 15>;
using Matrix15x12d = Eigen::Matrix<double, 15, 12>;
using Vector15d = Eigen::Matrix<double, 15, 1>;

inline constexpr int kImuErrorDim = 15;
inline constexpr int kCloneErrorDim = 6;

// Error-vector offsets inside the IMU block.
inline constexpr int kRotIdx = 0;
inline constexpr int kVelIdx = 3;
inline constexpr int kPosIdx = 6;
inline constexpr int kBgIdx = 9;
inline constexpr int kBaIdx = 12;

/// How a 15-vector error perturbs the IMU nominal state.
///   Standard:          R = exp(th) R^,  v = v^ + dv,               p = p^ + dp
///   FullInvariant:     R = exp(th) R^,  v = exp(th) v^ + Jl(th) dv, p = exp(th) p^ + Jl(th) dp
///   PartialInvariant:  R = exp(th) R^,  v = exp(th) v^ + Jl(th) dv, p = p^ + dp
/// Biases are additive in every mode.
enum class ErrorMode { Standard, FullInvariant, PartialInvariant };

inline constexpr ErrorMode kAllModes[] = {ErrorMode::Standard, ErrorMode::FullInvariant,
                                          ErrorMode::PartialInvariant};

std::string_view to_string(ErrorMode mode);
/// Accepts "standard", "invariant" and "partial" (plus the enumerator names).
std::optional<ErrorMode> parse_error_mode(std::string_view text);

/// IMU navigation state: world-from-IMU rotation, world velocity and
/// position, gyro and accelerometer biases.
struct ImuState {
  Matrix3d rot = Matrix3d::Identity();
  Vector3d vel = Vector3d::Zero();
  Vector3d pos = Vector3d::Zero();
  Vector3d bg = Vector3d::Zero();
  Vector3d ba = Vector3d::Zero();
};

struct ImuSample {
  double stamp = 0.0;
  Vector3d omega = Vector3d::Zero();
  Vector3d accel = Vector3d::Zero();
};

/// Sensor noise. The four IMU terms are continuous-time densities; the wheel
/// terms are per-sample standard deviations; pixel_sigma is in pixels.
struct NoiseParams {
  double sigma_g = 0.01;      // rad/s/sqrt(Hz)
  double sigma_a = 0.01;      // m/s^2/sqrt(Hz)
  double sigma_wg = 0.0001;   // rad/s^2/sqrt(Hz)
  double sigma_wa = 0.0001;   // m/s^3/sqrt(Hz)
  double sigma_wheel_v = 0.1;     // m/s
  double sigma_wheel_w = 0.001;   // rad/s
  double sigma_px = 1.0;          // pixel
  double sigma_plane = 0.1;       // sqrt of the relaxed 0.01 variance

  bool valid() const;
};

/// Pinhole used by the simulator and to convert pixel noise to the
/// normalized image plane.
struct CameraIntrinsics {
  double focal = 460.0;
  int width = 640;
  int height = 480;
};

/// Camera pose relative to the IMU: R_IC maps camera to IMU coordinates,
/// p_IC is the camera origin in the IMU frame.
struct CameraExtrinsics {
  Matrix3d R_IC = Matrix3d::Identity();
  Vector3d p_IC = Vector3d::Zero();
};

/// Wheel-odometer frame relative to the IMU: R_OI maps IMU to odometer
/// coordinates, p_IO is the odometer origin in the IMU frame.
struct WheelExtrinsics {
  Matrix3d R_OI = Matrix3d::Identity();
  Vector3d p_IO = Vector3d::Zero();
};

/// Forward-looking camera: optical axis along IMU x, image x along -IMU y,
/// image y along -IMU z.
CameraExtrinsics forward_camera(const Vector3d& p_IC = Vector3d(0.1, 0.0, 0.2));

}  // namespace viwo
