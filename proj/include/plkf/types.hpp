#pragma once

#include <Eigen/Dense>

namespace plkf {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// First and second moments of a Gaussian.
template <typename Scalar = double>
struct GaussianMoments {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;

  Index dim() const { return mean.size(); }
};

// Mirrors the lower triangle onto the upper one.
template <typename Derived>
void mirror_lower(Eigen::MatrixBase<Derived>& m) {
  m.template triangularView<Eigen::StrictlyUpper>() = m.transpose();
}

template <typename Derived>
typename Derived::PlainObject symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

}  // namespace plkf
