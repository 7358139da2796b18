#pragma once

// Test-only reference computations, independent of the library's numerical paths.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <functional>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// e^{A} by scaling and squaring of a 30-term Taylor series.
inline Mat expm(const Mat& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat scaled = a / std::pow(2.0, squarings);
  Mat term = Mat::Identity(a.rows(), a.cols());
  Mat sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Spectral projection onto eigenvalues with negative real part, from an
/// eigendecomposition V diag(indicator) V^{-1}.
inline Mat stable_projector_eig(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a);
  const Eigen::MatrixXcd v = es.eigenvectors();
  Eigen::VectorXcd ind(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) ind(i) = es.eigenvalues()(i).real() < 0 ? 1.0 : 0.0;
  const Eigen::MatrixXcd p = v * ind.asDiagonal() * v.inverse();
  return p.real();
}

inline double opnorm(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace oracle
