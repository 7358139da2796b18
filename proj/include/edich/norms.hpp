#pragma once

#include "edich/types.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace edich {

/// Spectral norm (largest singular value), the operator norm induced by the
/// Euclidean norm. 2x2 blocks use the closed form, which dominates the cost of
/// the pairwise envelope sweeps.
template <typename Derived>
typename Derived::RealScalar operator_norm(const Eigen::MatrixBase<Derived>& m) {
  using Real = typename Derived::RealScalar;
  using std::sqrt;
  if (m.rows() == 0 || m.cols() == 0) return Real(0);
  if (m.cols() == 1 || m.rows() == 1) return m.norm();
  if (m.rows() == 2 && m.cols() == 2) {
    const Real a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    const Real frob2 = a * a + b * b + c * c + d * d;
    const Real det = a * d - b * c;
    const Real disc = std::max(Real(0), (frob2 - 2 * det) * (frob2 + 2 * det));
    return sqrt((frob2 + sqrt(disc)) / 2);
  }
  Eigen::JacobiSVD<typename Derived::PlainObject> svd(m.eval());
  return svd.singularValues()(0);
}

template <typename Derived>
typename Derived::RealScalar condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Real = typename Derived::RealScalar;
  Eigen::JacobiSVD<typename Derived::PlainObject> svd(m.eval());
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return Real(1);
  const Real smallest = sv(sv.size() - 1);
  if (!(smallest > Real(0))) return std::numeric_limits<Real>::infinity();
  return sv(0) / smallest;
}

/// Least-squares slope of y against x.
template <typename Scalar>
Scalar least_squares_slope(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  const auto n = static_cast<Scalar>(x.size());
  if (x.size() < 2) return Scalar(0);
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Scalar sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : Scalar(0);
}

/// Idempotency defect ||P^2 - P||.
template <typename Derived>
typename Derived::RealScalar idempotency_defect(const Eigen::MatrixBase<Derived>& p) {
  return operator_norm((p * p - p).eval());
}

}  // namespace edich
