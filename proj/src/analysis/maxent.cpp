#include <cmath>

#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

double maxent_dual_solve(double q, double g) {
  require(q > 0.0 && q < 1.0, ErrorKind::InvalidInput, "q must be in (0, 1)");
  require(g > 0.0 && g < 1.0, ErrorKind::InvalidInput, "g must be in (0, 1); the dual is unbounded otherwise");
  const double lq = std::log(q);
  // q e^l / (1 + q e^l) - g, increasing in l
  auto slope = [&](double l) { return 1.0 / (1.0 + std::exp(-(l + lq))) - g; };
  double lo = -1.0, hi = 1.0;
  while (slope(lo) > 0.0) lo *= 2.0;
  while (slope(hi) < 0.0) hi *= 2.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (slope(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace fpt::analysis
