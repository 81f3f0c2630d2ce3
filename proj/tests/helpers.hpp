#pragma once

#include <Eigen/Dense>

#include "wvtr/common.hpp"

namespace testing {

inline Eigen::VectorXd random_vector(Eigen::Index n, wvtr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = lo + (hi - lo) * wvtr::uniform01(rng);
  return v;
}

inline Eigen::VectorXd random_unit_ball(Eigen::Index n, wvtr::Rng& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = wvtr::standard_normal(rng);
  return v.normalized() * wvtr::uniform01(rng);
}

}  // namespace testing
