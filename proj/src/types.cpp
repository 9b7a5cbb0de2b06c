#include "viwo/types.hpp"

namespace viwo {

std::string_view to_string(ErrorMode mode) {
  switch (mode) {
    case ErrorMode::Standard:
      return "standard";
    case ErrorMode::FullInvariant:
      return "invariant";
    case ErrorMode::PartialInvariant:
      return "partial";
  }
  return "unknown";
}

std::optional<ErrorMode> parse_error_mode(std::string_view text) {
  if (text == "standard" || text == "Standard") return ErrorMode::Standard;
  if (text == "invariant" || text == "FullInvariant") return ErrorMode::FullInvariant;
  if (text == "partial" || text == "PartialInvariant") return ErrorMode::PartialInvariant;
  return std::nullopt;
}

bool NoiseParams::valid() const {
  return sigma_g > 0 && sigma_a > 0 && sigma_wg > 0 && sigma_wa > 0 && sigma_wheel_v > 0 &&
         sigma_wheel_w > 0 && sigma_px > 0 && sigma_plane > 0;
}

CameraExtrinsics forward_camera(const Vector3d& p_IC) {
  CameraExtrinsics ext;
  ext.R_IC.col(0) = -Vector3d::UnitY();
  ext.R_IC.col(1) = -Vector3d::UnitZ();
  ext.R_IC.col(2) = Vector3d::UnitX();
  ext.p_IC = p_IC;
  return ext;
}

}  // namespace viwo
