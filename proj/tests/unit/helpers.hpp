#pragma once

#include "meda/common.hpp"
#include "meda/gm_distribution.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace testutil {

using meda::Matrix;
using meda::Rng;

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline meda::Labels random_labels(Rng& rng, std::size_t n, int k) {
  std::uniform_int_distribution<int> u(0, k - 1);
  meda::Labels l(n);
  for (auto& v : l) v = u(rng);
  return l;
}

/// Random GMM with log-variances in [log 0.25, log 4].
inline meda::GMMParams random_gmm(Rng& rng, int k, int h) {
  return {random_matrix(rng, k, h), random_matrix(rng, k, h, std::log(0.25), std::log(4.0))};
}

/// Central finite-difference gradient of f over every entry of x.
inline Matrix numeric_grad(Matrix& x, const std::function<double()>& f, double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + step;
      const double up = f();
      x(i, j) = keep - step;
      const double down = f();
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * step);
    }
  return g;
}

/// max |a - n| / max(|a|, |n|, floor) over all entries.
inline double max_rel_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j);
      const double n = numeric(i, j);
      const double scale = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / scale);
    }
  return worst;
}

}  // namespace testutil
