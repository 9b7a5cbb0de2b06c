#include "viwo/jacobian_check.hpp"

#include "viwo/lie.hpp"
#include "viwo/propagation.hpp"
#include "viwo/retraction.hpp"
#include "viwo/simulator.hpp"
#include "viwo/update.hpp"
#include "viwo/visual.hpp"
#include "viwo/wheel_plane.hpp"

#include <cmath>

namespace viwo {

namespace {

constexpr double kStep = 1e-6;    // state perturbation for measurement Jacobians
constexpr double kTau = 1e-4;     // time step for the dynamics cases
constexpr double kNested = 1e-4;  // perturbation paired with kTau

Vector3d gauss3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  const double x = n(rng), y = n(rng), z = n(rng);
  return Vector3d(x, y, z);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Central difference of f(retract(state, xi)) over every error coordinate.
template <typename F>
MatrixXd numeric_jacobian(const FilterState& state, F&& f, double h = kStep) {
  const int n = state.dim();
  const VectorXd f0 = f(state);
  MatrixXd J(f0.size(), n);
  for (int i = 0; i < n; ++i) {
    FilterState plus = state, minus = state;
    VectorXd d = VectorXd::Zero(n);
    d(i) = h;
    inject(plus, d);
    inject(minus, -d);
    J.col(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return J;
}

ImuSample random_sample(std::mt19937_64& rng) {
  ImuSample s;
  s.omega = gauss3(rng, 0.5);
  s.accel = gauss3(rng, 2.0) + Vector3d(0.0, 0.0, 9.81);
  return s;
}

/// Error after propagating a true state (nominal perturbed by xi, inputs
/// perturbed by noise) and the nominal state for tau seconds.
Vector15d propagated_error(const ImuState& nominal, const Vector15d& xi, const Eigen::Matrix<double, 12, 1>& noise,
                           const ImuSample& s, const Vector3d& g, ErrorMode mode, double tau) {
  const ImuState truth0 = retract(nominal, xi, mode);
  const ImuState nominal_t = integrate_kinematics(nominal, s.omega, s.accel, g, tau);
  // Measurement noise is subtracted from the readings; bias noise drives the biases.
  ImuState truth_t =
      integrate_kinematics(truth0, s.omega - noise.segment<3>(0), s.accel - noise.segment<3>(6), g, tau);
  truth_t.bg += noise.segment<3>(3) * tau;
  truth_t.ba += noise.segment<3>(9) * tau;
  return local(truth_t, nominal_t, mode);
}

JacobianCase error_dynamics_case() {
  return {"F error dynamics", [](const FilterState& state, std::mt19937_64& rng) {
            const ImuSample s = random_sample(rng);
            JacobianPair out;
            out.analytic = error_matrices(state, s).F;
            out.numeric = MatrixXd(kImuErrorDim, kImuErrorDim);
            const Eigen::Matrix<double, 12, 1> zero = Eigen::Matrix<double, 12, 1>::Zero();
            for (int i = 0; i < kImuErrorDim; ++i) {
              Vector15d d = Vector15d::Zero();
              d(i) = kNested;
              auto e = [&](double sign_x, double tau) {
                return propagated_error(state.imu, sign_x * d, zero, s, state.gravity, state.mode, tau);
              };
              out.numeric.col(i) = (e(1, kTau) - e(-1, kTau) - e(1, -kTau) + e(-1, -kTau)) / (4.0 * kTau * kNested);
            }
            return out;
          }};
}

JacobianCase noise_input_case() {
  return {"G Qc G^T noise input", [](const FilterState& state, std::mt19937_64& rng) {
            const ImuSample s = random_sample(rng);
            const Matrix15x12d G = error_matrices(state, s).G;
            MatrixXd Gn(kImuErrorDim, 12);
            for (int j = 0; j < 12; ++j) {
              Eigen::Matrix<double, 12, 1> n = Eigen::Matrix<double, 12, 1>::Zero();
              n(j) = kNested;
              auto e = [&](double sign_n, double tau) {
                return propagated_error(state.imu, Vector15d::Zero(), sign_n * n, s, state.gravity, state.mode, tau);
              };
              Gn.col(j) = (e(1, kTau) - e(-1, kTau) - e(1, -kTau) + e(-1, -kTau)) / (4.0 * kTau * kNested);
            }
            // Noise sign conventions differ between formulations; the
            // covariance it induces does not.
            NoiseParams np;
            np.sigma_g = 0.7;
            np.sigma_wg = 0.3;
            np.sigma_a = 1.1;
            np.sigma_wa = 0.2;
            const Eigen::Matrix<double, 12, 12> Q = continuous_noise(np);
            return JacobianPair{G * Q * G.transpose(), Gn * Q * Gn.transpose()};
          }};
}

JacobianCase augmentation_case() {
  return {"augmentation J", [](const FilterState& state, std::mt19937_64& rng) {
            CameraExtrinsics ext;
            ext.R_IC = so3_exp(gauss3(rng, 1.0));
            ext.p_IC = gauss3(rng, 0.3);
            auto make = [&](const FilterState& s) {
              CameraClone c;
              c.rot = s.imu.rot * ext.R_IC;
              c.pos = s.imu.pos + s.imu.rot * ext.p_IC;
              return c;
            };
            const CameraClone nominal = make(state);
            JacobianPair out;
            out.analytic = augmentation_jacobian(state, ext);
            out.numeric = numeric_jacobian(state, [&](const FilterState& s) -> VectorXd {
              return local(make(s), nominal);
            });
            return out;
          }};
}

struct VisualSetup {
  FilterState state;
  FeatureTrack track;
  TriangulatedFeature feature;
};

VisualSetup visual_setup(const FilterState& state, std::mt19937_64& rng) {
  VisualSetup v{state, {}, {}};
  const CameraClone& ref = state.clones.front();
  v.feature.pos = ref.pos + ref.rot * Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 4, 8));
  v.track.id = 1;
  for (const auto& c : state.clones) {
    const Vector3d p_c = c.rot.transpose() * (v.feature.pos - c.pos);
    v.track.observations.push_back({c.stamp, project(p_c) + gauss3(rng, 1e-3).head<2>()});
  }
  return v;
}

JacobianCase visual_state_case() {
  return {"visual H_x", [](const FilterState& state, std::mt19937_64& rng) {
            const VisualSetup v = visual_setup(state, rng);
            JacobianPair out;
            const FeatureJacobians jac = feature_jacobians(v.state, v.feature, v.track);
            out.analytic = jac.H_x;
            out.numeric = -numeric_jacobian(v.state, [&](const FilterState& s) -> VectorXd {
              return feature_jacobians(s, v.feature, v.track).r;
            });
            return out;
          }};
}

JacobianCase visual_feature_case() {
  return {"visual H_f", [](const FilterState& state, std::mt19937_64& rng) {
            const VisualSetup v = visual_setup(state, rng);
            JacobianPair out;
            out.analytic = feature_jacobians(v.state, v.feature, v.track).H_f;
            out.numeric = MatrixXd(out.analytic.rows(), 3);
            for (int i = 0; i < 3; ++i) {
              TriangulatedFeature plus = v.feature, minus = v.feature;
              plus.pos(i) += kStep;
              minus.pos(i) -= kStep;
              out.numeric.col(i) = -(feature_jacobians(v.state, plus, v.track).r -
                                     feature_jacobians(v.state, minus, v.track).r) /
                                   (2.0 * kStep);
            }
            return out;
          }};
}

WheelExtrinsics random_wheel(std::mt19937_64& rng) {
  WheelExtrinsics w;
  w.R_OI = so3_exp(gauss3(rng, 0.3));
  w.p_IO = gauss3(rng, 0.5);
  return w;
}

JacobianCase wheel_rotation_case() {
  return {"wheel rotation H", [](const FilterState& state, std::mt19937_64& rng) {
            const WheelExtrinsics wheel = random_wheel(rng);
            CameraExtrinsics cam;
            cam.R_IC = so3_exp(gauss3(rng, 1.0));
            cam.p_IC = gauss3(rng, 0.3);
            // Clone k sits a pure odometer yaw behind the current pose so the
            // residual is zero at the linearization point.
            FilterState s = state;
            const double phi = uniform(rng, -0.5, 0.5);
            const int k = static_cast<int>(s.clones.size()) / 2;
            const Matrix3d R_Ik = s.imu.rot * wheel.R_OI.transpose() * rot_z(-phi) * wheel.R_OI;
            s.clones[k].rot = R_Ik * cam.R_IC;
            JacobianPair out;
            out.analytic = linearize_wheel_rotation(s, k, phi, 1.0, cam, wheel).H;
            out.numeric = -numeric_jacobian(s, [&](const FilterState& x) -> VectorXd {
              return VectorXd::Constant(1, wheel_rotation_residual(x.imu, x.clones[k], cam, wheel, phi));
            });
            return out;
          }};
}

JacobianCase wheel_velocity_case() {
  return {"wheel velocity H", [](const FilterState& state, std::mt19937_64& rng) {
            const WheelExtrinsics wheel = random_wheel(rng);
            const Vector3d omega = gauss3(rng, 0.5);
            const WheelSample sample{0.0, 0.0, uniform(rng, 0.0, 10.0)};
            JacobianPair out;
            out.analytic = linearize_wheel_velocity(state, sample, omega, wheel, 0.1, 0.05).H;
            out.numeric = numeric_jacobian(state, [&](const FilterState& x) -> VectorXd {
              return predict_wheel_velocity(x.imu, omega, wheel);
            });
            return out;
          }};
}

JacobianCase plane_case() {
  return {"plane H", [](const FilterState& state, std::mt19937_64& rng) {
            const WheelExtrinsics wheel = random_wheel(rng);
            const Matrix3d plane_rot = so3_exp(gauss3(rng, 0.2));
            JacobianPair out;
            out.analytic = linearize_plane(state, plane_rot, wheel, 0.1).H;
            out.numeric = numeric_jacobian(state, [&](const FilterState& x) -> VectorXd {
              return predict_plane(x.imu, plane_rot, wheel);
            });
            return out;
          }};
}

}  // namespace

double relative_error(const MatrixXd& analytic, const MatrixXd& numeric) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) return INFINITY;
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-3);
}

FilterState random_filter_state(std::mt19937_64& rng, ErrorMode mode, int n_clones) {
  FilterState s;
  s.mode = mode;
  s.imu.rot = so3_exp(gauss3(rng, 1.5));
  s.imu.vel = gauss3(rng, 5.0);
  s.imu.pos = gauss3(rng, 10.0);
  s.imu.bg = gauss3(rng, 0.01);
  s.imu.ba = gauss3(rng, 0.1);
  s.stamp = 1.0;
  // Clones look roughly the same way from nearby positions.
  const Matrix3d base = so3_exp(gauss3(rng, 1.5));
  const Vector3d origin = s.imu.pos + gauss3(rng, 1.0);
  for (int i = 0; i < n_clones; ++i) {
    CameraClone c;
    c.rot = so3_exp(gauss3(rng, 0.05)) * base;
    c.pos = origin + base * Vector3d(0.3 * i, 0.0, 0.0) + gauss3(rng, 0.05);
    c.stamp = 0.1 * i;
    s.clones.push_back(c);
  }
  const int n = s.dim();
  MatrixXd A(n, n);
  std::normal_distribution<double> unit(0.0, 0.01);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = unit(rng);
  }
  s.cov = A * A.transpose() + 1e-6 * MatrixXd::Identity(n, n);
  return s;
}

std::vector<JacobianCase> default_jacobian_cases() {
  return {error_dynamics_case(),  noise_input_case(),    augmentation_case(),   visual_state_case(),
          visual_feature_case(),  wheel_rotation_case(), wheel_velocity_case(), plane_case()};
}

std::vector<JacobianRow> run_jacobian_check(const std::vector<JacobianCase>& cases, std::uint64_t seed, int n_trials,
                                            double tolerance) {
  std::vector<JacobianRow> rows;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (ErrorMode mode : kAllModes) {
      auto rng = make_rng(seed, 1000 * (c + 1) + static_cast<std::uint64_t>(mode));
      JacobianRow row;
      row.name = cases[c].name;
      row.mode = mode;
      for (int t = 0; t < n_trials; ++t) {
        const FilterState state = random_filter_state(rng, mode, 4);
        const JacobianPair pair = cases[c].evaluate(state, rng);
        const double err = relative_error(pair.analytic, pair.numeric);
        row.max_rel_error = std::isfinite(err) ? std::max(row.max_rel_error, err) : INFINITY;
        ++row.trials;
      }
      row.pass = row.trials > 0 && row.max_rel_error <= tolerance;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace viwo
