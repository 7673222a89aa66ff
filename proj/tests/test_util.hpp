#pragma once

#include "gkeb/covariance.hpp"
#include "gkeb/operators.hpp"
#include "gkeb/random.hpp"

#include <algorithm>
#include <cmath>

namespace gkeb::testing {

inline double rel_err(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline double rel_err(const Vector& a, const Vector& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

inline Matrix random_matrix(Index m, Index n, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(m, n, rng);
}

}  // namespace gkeb::testing
