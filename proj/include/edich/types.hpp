#pragma once

#include <Eigen/Dense>

#include <vector>

namespace edich {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One vector per grid point.
template <typename Scalar>
using SampledVector = std::vector<Vector<Scalar>>;

using Index = Eigen::Index;

// Hard caps for desk-scale problems.
inline constexpr Index kMaxDimension = 64;
inline constexpr Index kMaxGridPoints = 10'000'000;

}  // namespace edich
