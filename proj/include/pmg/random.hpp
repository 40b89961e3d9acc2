#pragma once

#include <random>

#include "pmg/common.hpp"

namespace pmg {

using Rng = std::mt19937_64;

/// Fills a rows x cols matrix column by column with N(0, 1) draws.
inline Mat standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

inline Vec standard_normal(Eigen::Index n, Rng& rng) {
  return standard_normal(n, 1, rng).col(0);
}

}  // namespace pmg
