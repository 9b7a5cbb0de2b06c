#include "viwo/chi2.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <map>
#include <stdexcept>
#include <utility>

namespace viwo {

double chi2_quantile(double probability, int dof) {
  if (dof <= 0 || !(probability > 0.0 && probability < 1.0)) {
    throw std::invalid_argument("chi2_quantile: need dof > 0 and probability in (0, 1)");
  }
  thread_local std::map<std::pair<double, int>, double> cache;
  const auto key = std::make_pair(probability, dof);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const boost::math::chi_squared dist(static_cast<double>(dof));
  const double q = boost::math::quantile(dist, probability);
  cache.emplace(key, q);
  return q;
}

}  // namespace viwo
