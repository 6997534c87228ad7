#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "plkf/errors.hpp"
#include "plkf/types.hpp"

namespace plkf {

/// Asymmetry (relative to the largest entry) tolerated before an input
/// covariance is rejected rather than symmetrized.
inline constexpr double kSymmetryTolerance = 1e-10;

/// First z_dim columns of the lower Cholesky factor, split at row z_dim.
template <typename Scalar = double>
struct PartialCholesky {
  Index z_dim = 0;
  Matrix<Scalar> lnn;  // Z x Z, lower triangular
  Matrix<Scalar> lln;  // (X - Z) x Z

  Index dim() const { return lnn.rows() + lln.rows(); }

  // [lnn; lln] as one X x Z block.
  Matrix<Scalar> columns() const {
    Matrix<Scalar> out(dim(), z_dim);
    out << lnn, lln;
    return out;
  }
};

/// Index-vector permutation: applying it to x yields y with y(i) = x(order[i]).
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<Index> order) : order_(std::move(order)) {
    std::vector<bool> seen(order_.size(), false);
    for (Index i : order_) {
      if (i < 0 || i >= size() || seen[static_cast<std::size_t>(i)]) {
        throw InvalidArgument("Permutation: index sequence is not a bijection");
      }
      seen[static_cast<std::size_t>(i)] = true;
    }
  }

  static Permutation identity(Index n) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    return Permutation(std::move(order));
  }

  Index size() const { return static_cast<Index>(order_.size()); }
  const std::vector<Index>& order() const { return order_; }
  Index operator[](Index i) const { return order_[static_cast<std::size_t>(i)]; }

  bool is_identity() const {
    for (Index i = 0; i < size(); ++i) {
      if ((*this)[i] != i) return false;
    }
    return true;
  }

  Permutation inverse() const {
    std::vector<Index> inv(order_.size());
    for (Index i = 0; i < size(); ++i) inv[static_cast<std::size_t>((*this)[i])] = i;
    return Permutation(std::move(inv));
  }

  template <typename Scalar>
  Vector<Scalar> apply(const Vector<Scalar>& v) const {
    check(v.size());
    return v(order_);
  }

  // T P T^T
  template <typename Scalar>
  Matrix<Scalar> apply(const Matrix<Scalar>& m) const {
    check(m.rows());
    check(m.cols());
    return m(order_, order_);
  }

  // T M
  template <typename Scalar>
  Matrix<Scalar> apply_rows(const Matrix<Scalar>& m) const {
    check(m.rows());
    return m(order_, Eigen::all);
  }

 private:
  void check(Index n) const {
    if (n != size()) {
      throw InvalidArgument("Permutation: length " + std::to_string(size()) +
                            " applied to dimension " + std::to_string(n));
    }
  }

  std::vector<Index> order_;
};

template <typename Scalar>
GaussianMoments<Scalar> permute_moments(const Permutation& t, const Vector<Scalar>& mean,
                                        const Matrix<Scalar>& cov) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols()) {
    throw InvalidArgument("permute_moments: mean and covariance dimensions differ");
  }
  return {t.apply(mean), t.apply(cov)};
}

template <typename Scalar>
GaussianMoments<Scalar> permute_moments(const Permutation& t, const GaussianMoments<Scalar>& g) {
  return permute_moments(t, g.mean, g.cov);
}

namespace detail {

template <typename Scalar>
void check_symmetric(const Matrix<Scalar>& p, const char* who) {
  using std::abs;
  if (p.rows() != p.cols() || p.rows() == 0) {
    throw InvalidArgument(std::string(who) + ": matrix must be square and non-empty");
  }
  const Scalar scale = p.cwiseAbs().maxCoeff();
  const Scalar asym = (p - p.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= Scalar(kSymmetryTolerance) * scale)) {
    throw InvalidArgument(std::string(who) + ": matrix is not symmetric (asymmetry " +
                          std::to_string(static_cast<double>(asym)) + ")");
  }
}

}  // namespace detail

/// Column-wise Cholesky-Crout stopped after `z_dim` columns. Column j reads
/// only P(j:, j) and the j columns already computed, so the trailing
/// X - Z columns of the factor are never formed: O(X Z^2) work.
template <typename Scalar>
PartialCholesky<Scalar> cholesky_partial(const Matrix<Scalar>& p, Index z_dim) {
  detail::check_symmetric(p, "cholesky_partial");
  const Index n = p.rows();
  if (z_dim < 1 || z_dim > n) {
    throw InvalidArgument("cholesky_partial: z_dim must lie in [1, " + std::to_string(n) + "]");
  }
  using std::sqrt;

  Matrix<Scalar> cols(n, z_dim);
  for (Index j = 0; j < z_dim; ++j) {
    const auto done = cols.leftCols(j);
    const Scalar pivot = p(j, j) - done.row(j).squaredNorm();
    if (!(pivot > 0)) throw NotPositiveDefinite(j);
    const Scalar diag = sqrt(pivot);
    cols(j, j) = diag;
    cols.block(0, j, j, 1).setZero();
    const Index below = n - j - 1;
    if (below > 0) {
      // symmetrized input column
      Vector<Scalar> rhs = (p.col(j).tail(below) + p.row(j).tail(below).transpose()) / Scalar(2);
      rhs.noalias() -= done.bottomRows(below) * done.row(j).transpose();
      cols.col(j).tail(below) = rhs / diag;
    }
  }
  PartialCholesky<Scalar> out;
  out.z_dim = z_dim;
  out.lnn = cols.topRows(z_dim);
  out.lln = cols.bottomRows(n - z_dim);
  return out;
}

/// Full lower-triangular factor L with L L^T = P.
template <typename Scalar>
Matrix<Scalar> cholesky_full(const Matrix<Scalar>& p) {
  detail::check_symmetric(p, "cholesky_full");
  const Matrix<Scalar> sym = symmetrized(p);
  Eigen::LLT<Matrix<Scalar>> llt(sym);
  bool ok = llt.info() == Eigen::Success;
  Matrix<Scalar> l;
  if (ok) {
    l = llt.matrixL();
    ok = (l.diagonal().array() > 0).all();
  }
  if (!ok) {
    // Re-run column by column to report the failing pivot.
    cholesky_partial(sym, sym.rows());
    throw NotPositiveDefinite(sym.rows() - 1);
  }
  return l;
}

}  // namespace plkf
