#pragma once

#include "viwo/filter_state.hpp"
#include "viwo/types.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace viwo {

struct JacobianPair {
  MatrixXd analytic;
  MatrixXd numeric;
};

/// Evaluates one analytic Jacobian and its finite-difference counterpart at
/// a state; auxiliary inputs (samples, features) are drawn from the rng.
struct JacobianCase {
  std::string name;
  std::function<JacobianPair(const FilterState&, std::mt19937_64&)> evaluate;
};

struct JacobianRow {
  std::string name;
  ErrorMode mode = ErrorMode::PartialInvariant;
  int trials = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

inline constexpr double kJacobianTolerance = 1e-4;

/// ||A - N||_F / max(||N||_F, 1e-3)
double relative_error(const MatrixXd& analytic, const MatrixXd& numeric);

/// Random IMU state with `n_clones` clones near it and a random PSD covariance.
FilterState random_filter_state(std::mt19937_64& rng, ErrorMode mode, int n_clones);

/// Error dynamics, noise input, augmentation, visual, wheel and plane cases.
std::vector<JacobianCase> default_jacobian_cases();

/// Runs every case in every mode over `n_trials` random states.
std::vector<JacobianRow> run_jacobian_check(const std::vector<JacobianCase>& cases, std::uint64_t seed, int n_trials,
                                            double tolerance = kJacobianTolerance);

}  // namespace viwo
