#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "pmg/common.hpp"

namespace pmg::testing {

/// Five-point central differences of a scalar function of a matrix argument.
inline Mat central_difference(const std::function<double(const Mat&)>& f, const Mat& x, double h = 1e-3) {
  Mat g(x.rows(), x.cols());
  Mat xp = x;
  const auto at = [&](Eigen::Index i, Eigen::Index j, double keep, double offset) {
    xp(i, j) = keep + offset;
    return f(xp);
  };
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double keep = xp(i, j);
      const double d = 8.0 * (at(i, j, keep, h) - at(i, j, keep, -h)) - (at(i, j, keep, 2 * h) - at(i, j, keep, -2 * h));
      xp(i, j) = keep;
      g(i, j) = d / (12.0 * h);
    }
  }
  return g;
}

/// Largest coordinate-wise relative error. Coordinates far below the largest
/// entry are measured against 1e-3 of that entry instead of their own size.
inline double max_relative_error(const Mat& a, const Mat& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double den = std::max({std::abs(a(i, j)), std::abs(b(i, j)), 1e-3 * scale});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / den);
    }
  return worst;
}

template <typename A, typename B>
bool bitwise_equal(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (!(a(i, j) == b(i, j) || (std::isnan(a(i, j)) && std::isnan(b(i, j))))) return false;
  return true;
}

}  // namespace pmg::testing
