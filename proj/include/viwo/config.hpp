#pragma once

#include "viwo/estimator.hpp"
#include "viwo/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace viwo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ErrorMode mode = ErrorMode::PartialInvariant;
  SimConfig sim;
  bool wheel_rotation = true;
  bool wheel_velocity = true;
  bool plane = true;
  bool outlier_detection = true;
  int window = 11;
  int min_track_length = 3;
  double gate_probability = 0.95;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int runs = 25;
};

/// Every key is optional; unknown keys and ill-typed values throw ConfigError.
///
/// {
///   "mode": "partial", "seed": 1, "runs": 25, "output": "out",
///   "window": 11, "min_track_length": 3, "gate_probability": 0.95,
///   "toggles": {"wheel_rotation", "wheel_velocity", "plane", "outlier_detection"},
///   "sim": {"radius", "speed", "imu_rate", "wheel_rate", "cam_rate", "n_landmarks",
///           "duration", "add_noise", "ring_offset", "min_height", "max_height",
///           "n_moving_landmarks", "moving_speed", "initial_bias", "focal",
///           "noise": {"sigma_g", "sigma_a", "sigma_wg", "sigma_wa", "sigma_wheel_v",
///                     "sigma_wheel_w", "sigma_px", "sigma_plane"},
///           "dynamic": {"n_static", "n_dynamic", "sigma_v", "sigma_v_per_frame",
///                       "omega0", "speed", "min_depth", "max_depth"}}
/// }
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Validates the combined configuration; throws ConfigError.
void validate(const RunConfig& cfg);

EstimatorOptions estimator_options(const RunConfig& cfg);

}  // namespace viwo
