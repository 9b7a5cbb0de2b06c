#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/simulator.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace viwo {

inline constexpr const char* kLogHeader = "# viwo-log v1";
inline constexpr const char* kTruthHeader = "# viwo-gt v1";
inline constexpr const char* kTrajectoryHeader = "# viwo-traj v1";

/// Malformed input; `line` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Space-separated records after the version header:
///   INIT t qw qx qy qz px py pz vx vy vz bgx bgy bgz bax bay baz
///   IMU t wx wy wz ax ay az
///   WHEEL t w v
///   FRAME t n          (followed by n CAM records with the same t)
///   CAM t id x y       (normalized image coordinates)
void write_log(std::ostream& os, const MeasurementStream& stream);
MeasurementStream read_log(std::istream& is);

/// Truth at the IMU rate ("GT t qw qx qy qz px py pz vx vy vz bg.. ba..")
/// plus "MOVING id" lines for landmarks that are not static.
void write_ground_truth(std::ostream& os, const GroundTruth& gt, const MeasurementStream& stream);

struct TruthLog {
  std::vector<TruthSample> samples;
  std::vector<Vector3d> bg;
  std::vector<Vector3d> ba;
  std::vector<FeatureId> moving_ids;

  /// Nearest sample at or before t.
  const TruthSample& at(double t) const;
};

TruthLog read_ground_truth(std::istream& is);

/// CSV: t, pos, rotation vector, vel, bg, ba, diagonal of the IMU covariance.
void write_trajectory_header(std::ostream& os);
void write_trajectory_row(std::ostream& os, double t, const FilterState& state);

struct TrajectoryRow {
  double t = 0.0;
  ImuState state;
  VectorXd cov_diag;
};

std::vector<TrajectoryRow> read_trajectory(std::istream& is);

}  // namespace viwo
