#pragma once

namespace viwo {

/// Quantile of the chi-square distribution with `dof` degrees of freedom.
/// Results for the commonly used probabilities are cached per thread.
double chi2_quantile(double probability, int dof);

}  // namespace viwo
