#pragma once

// Moment matching of a Gaussian through a nonlinear map: the plain cubature
// sums over all C(X) points, and the partially-linear evaluation that only
// visits the nonlinear points and only needs the first Z Cholesky columns.

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "plkf/cubature.hpp"
#include "plkf/errors.hpp"
#include "plkf/linalg.hpp"
#include "plkf/types.hpp"

namespace plkf {

/// y = [A1 x + g(z); A x] with z the first z_dim entries of x. Without A1
/// this is the plain partially linear form y = [g(z); A x].
///
/// Every call of g bumps an atomic counter. Reading it is only meaningful
/// between moment-matching operations.
template <typename Scalar = double>
class PartiallyLinearFunction {
 public:
  using NonlinearMap = std::function<Vector<Scalar>(const Vector<Scalar>&)>;

  PartiallyLinearFunction(Index z_dim, Index g_dim, NonlinearMap g, Matrix<Scalar> linear,
                          std::optional<Matrix<Scalar>> additive = std::nullopt)
      : z_dim_(z_dim),
        g_dim_(g_dim),
        g_(std::move(g)),
        linear_(std::move(linear)),
        additive_(std::move(additive)) {
    const Index x = linear_.cols();
    if (z_dim_ < 1 || z_dim_ > x) {
      throw InvalidArgument("PartiallyLinearFunction: z_dim must lie in [1, x_dim]");
    }
    if (g_dim_ < 0 || !g_) throw InvalidArgument("PartiallyLinearFunction: invalid g");
    if (additive_ && (additive_->rows() != g_dim_ || additive_->cols() != x)) {
      throw InvalidArgument("PartiallyLinearFunction: additive map must be g_dim x x_dim");
    }
  }

  PartiallyLinearFunction(const PartiallyLinearFunction& other)
      : z_dim_(other.z_dim_),
        g_dim_(other.g_dim_),
        g_(other.g_),
        linear_(other.linear_),
        additive_(other.additive_),
        evaluations_(other.evaluations()) {}

  PartiallyLinearFunction& operator=(const PartiallyLinearFunction& other) {
    if (this != &other) {
      z_dim_ = other.z_dim_;
      g_dim_ = other.g_dim_;
      g_ = other.g_;
      linear_ = other.linear_;
      additive_ = other.additive_;
      evaluations_.store(other.evaluations());
    }
    return *this;
  }

  Index z_dim() const { return z_dim_; }
  Index x_dim() const { return linear_.cols(); }
  Index g_dim() const { return g_dim_; }
  Index output_dim() const { return g_dim_ + linear_.rows(); }

  const Matrix<Scalar>& linear_map() const { return linear_; }
  const std::optional<Matrix<Scalar>>& additive_map() const { return additive_; }

  Vector<Scalar> nonlinear(const Vector<Scalar>& z) const {
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    Vector<Scalar> out = g_(z);
    if (out.size() != g_dim_) {
      throw InvalidArgument("PartiallyLinearFunction: g returned " + std::to_string(out.size()) +
                            " values, expected " + std::to_string(g_dim_));
    }
    return out;
  }

  // Full evaluation; calls g exactly once.
  Vector<Scalar> operator()(const Vector<Scalar>& x) const {
    if (x.size() != x_dim()) throw InvalidArgument("PartiallyLinearFunction: bad input size");
    Vector<Scalar> y(output_dim());
    y.head(g_dim_) = nonlinear(x.head(z_dim_));
    if (additive_) y.head(g_dim_).noalias() += *additive_ * x;
    y.tail(linear_.rows()).noalias() = linear_ * x;
    return y;
  }

  // Evaluates every column of xs; g is called once per column.
  Matrix<Scalar> apply_columns(const Matrix<Scalar>& xs) const {
    if (xs.rows() != x_dim()) throw InvalidArgument("PartiallyLinearFunction: bad input size");
    Matrix<Scalar> ys(output_dim(), xs.cols());
    for (Index i = 0; i < xs.cols(); ++i) {
      ys.col(i).head(g_dim_) = nonlinear(xs.col(i).head(z_dim_));
    }
    if (additive_) ys.topRows(g_dim_).noalias() += *additive_ * xs;
    ys.bottomRows(linear_.rows()).noalias() = linear_ * xs;
    return ys;
  }

  std::uint64_t evaluations() const { return evaluations_.load(std::memory_order_relaxed); }
  void reset_evaluations() { evaluations_.store(0); }

 private:
  Index z_dim_;
  Index g_dim_;
  NonlinearMap g_;
  Matrix<Scalar> linear_;
  std::optional<Matrix<Scalar>> additive_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

/// Joint Gaussian moments of an input x and output y = f(x).
template <typename Scalar = double>
struct JointGaussian {
  Vector<Scalar> mean_x;
  Vector<Scalar> mean_y;
  Matrix<Scalar> cov_xx;
  Matrix<Scalar> cov_xy;  // X x Y
  Matrix<Scalar> cov_yy;
};

/// Intermediates of the partially-linear moment evaluation.
template <typename Scalar = double>
struct PlScratch {
  Scalar w_cl = 0;
  Vector<Scalar> weights;   // weights of the visited nonlinear points
  Vector<Scalar> g_center;  // g(m^z)
  Matrix<Scalar> g_points;  // G_z, one column per nonlinear point
  Vector<Scalar> u;         // -w_cl g(m^z) - G_z w
  Vector<Scalar> u_l;       // g(m^z) + u
  Matrix<Scalar> c_points;  // u 1^T
  bool partial_factor = false;
};

/// Largest violation of the scratch recomputation identities.
template <typename Scalar>
Scalar scratch_residual(const PlScratch<Scalar>& s) {
  Scalar r = std::abs(s.w_cl - (Scalar(1) - s.weights.sum()));
  const Vector<Scalar> u = -s.w_cl * s.g_center - s.g_points * s.weights;
  r = std::max(r, (s.u - u).cwiseAbs().maxCoeff());
  r = std::max(r, (s.u_l - (s.g_center + s.u)).cwiseAbs().maxCoeff());
  const Matrix<Scalar> c = s.u * RowVector<Scalar>::Ones(s.g_points.cols());
  if (c.size() > 0) r = std::max(r, (s.c_points - c).cwiseAbs().maxCoeff());
  return r;
}

namespace detail {

inline constexpr Index kPointChunk = 512;

template <typename Scalar>
void check_moments(const Vector<Scalar>& m, const Matrix<Scalar>& p, Index x_dim, const char* who) {
  if (m.size() != x_dim || p.rows() != x_dim || p.cols() != x_dim) {
    throw InvalidArgument(std::string(who) + ": mean/covariance do not match dimension " +
                          std::to_string(x_dim));
  }
}

}  // namespace detail

/// Plain cubature moment matching: X_i = m + L xi_i, Y_i = f(X_i) and the
/// weighted mean, cross-covariance and covariance sums over every point.
/// Calls f exactly rule.size() times. Points are streamed in chunks in a single
/// pass; the sums are taken about c = f at the heaviest point and recentred
/// exactly at the end, so no output is stored.
template <typename Scalar, typename Fn>
JointGaussian<Scalar> match_full(Fn&& f, const Vector<Scalar>& m, const Matrix<Scalar>& p,
                                 const CubatureRule<Scalar>& rule) {
  const Index x = rule.dim();
  detail::check_moments(m, p, x, "match_full");
  const Matrix<Scalar> l = cholesky_full(p);  // zero above the diagonal
  const Index count = rule.size();

  Index heaviest = 0;
  rule.weights.maxCoeff(&heaviest);

  Vector<Scalar> c;            // shift
  Vector<Scalar> s1;           // sum w (y - c)
  Vector<Scalar> sx;           // sum w dx
  Matrix<Scalar> sxy, syy;     // sum w dx (y - c)^T, sum w (y - c)(y - c)^T
  Scalar sw(0);

  // The chunk holding the heaviest point goes first so that c is known.
  const Index chunks = (count + detail::kPointChunk - 1) / detail::kPointChunk;
  const Index lead = heaviest / detail::kPointChunk;
  for (Index visit = 0; visit < chunks; ++visit) {
    const Index chunk = visit == 0 ? lead : (visit <= lead ? visit - 1 : visit);
    const Index start = chunk * detail::kPointChunk;
    const Index n = std::min(detail::kPointChunk, count - start);
    const Matrix<Scalar> dx = l * rule.points.middleCols(start, n);
    Matrix<Scalar> xs = dx;
    xs.colwise() += m;
    Matrix<Scalar> ys;
    if constexpr (requires { f.apply_columns(xs); }) {
      ys = f.apply_columns(xs);
    } else {
      for (Index i = 0; i < n; ++i) {
        Vector<Scalar> y = f(Vector<Scalar>(xs.col(i)));
        if (ys.size() == 0) ys.resize(y.size(), n);
        if (y.size() != ys.rows()) throw InvalidArgument("match_full: output size changed");
        ys.col(i) = y;
      }
    }
    if (visit == 0) {
      const Index ny = ys.rows();
      c = ys.col(heaviest - start);
      s1.setZero(ny);
      sx.setZero(x);
      sxy.setZero(x, ny);
      syy.setZero(ny, ny);
    } else if (ys.rows() != c.size()) {
      throw InvalidArgument("match_full: output size changed");
    }
    ys.colwise() -= c;
    const auto w = rule.weights.segment(start, n);
    const Matrix<Scalar> wdy = w.asDiagonal() * ys.transpose();
    s1.noalias() += ys * w;
    sx.noalias() += dx * w;
    sxy.noalias() += dx * wdy;
    syy.noalias() += ys * wdy;
    sw += w.sum();
  }

  // With d = mean_y - c:
  //   sum w (y - mean)(y - mean)^T = S_yy - S_1 d^T - d S_1^T + sw d d^T
  //   sum w dx (y - mean)^T        = S_xy - S_x d^T
  JointGaussian<Scalar> out;
  out.mean_x = m;
  out.cov_xx = p;
  out.mean_y = c * sw + s1;
  const Vector<Scalar> d = out.mean_y - c;
  out.cov_xy = sxy - sx * d.transpose();
  out.cov_yy = syy - s1 * d.transpose() - d * s1.transpose() + sw * d * d.transpose();
  mirror_lower(out.cov_yy);
  return out;
}

/// Partially-linear moment matching for y = [g(z); A x].
///
///   m^y  = [w_cl g(m^z) + G_z w_z ; A m^x]
///   P^xy = [L Xi_z W_z G_z^T , P A^T]
///   P^yy = [(G_z + C_z) W_z (G_z + C_z)^T + w_cl u_l u_l^T , *      ]
///          [A L Xi_z W_z G_z^T                            , A P A^T]
///
/// With `use_unique` (and an exact unique set) the deduplicated z-blocks are
/// used and g is called 1 + |unique| times; the linear part of every visited
/// point is then zero and only the first Z columns of L are computed.
/// Otherwise every nonlinear point is visited, with the full factor unless
/// those points already vanish on the linear coordinates.
template <typename Scalar>
JointGaussian<Scalar> match_pl(const PartiallyLinearFunction<Scalar>& plf,
                               const Vector<Scalar>& m, const Matrix<Scalar>& p,
                               const ClassifiedRule<Scalar>& cr, bool use_unique = true,
                               PlScratch<Scalar>* scratch = nullptr) {
  const Index x = plf.x_dim();
  const Index z = plf.z_dim();
  if (plf.additive_map()) {
    throw InvalidArgument("match_pl: function carries an additive map; use match_general");
  }
  if (cr.z_dim != z || cr.dim() != x) {
    throw InvalidArgument("match_pl: classified rule does not match the function's (Z, X)");
  }
  detail::check_moments(m, p, x, "match_pl");
  if (cr.reduced() && !use_unique) {
    throw InvalidArgument("match_pl: a reduced rule requires unique-point evaluation");
  }

  // The merged set is only used when it reproduces the per-point sums.
  const bool unique = use_unique && cr.unique.exact;
  const bool partial = unique || cr.linear_block_vanishes();
  const Vector<Scalar>& weights = unique ? cr.unique.weights : cr.weights_z;
  // Unit-space nonlinear points: Z x n for the merged set, X x n otherwise.
  const Matrix<Scalar>& xi = unique ? cr.unique.points : cr.points_z;
  const Index n = weights.size();

  Matrix<Scalar> factor;  // X x Z (partial) or X x X
  if (partial) {
    factor = cholesky_partial(p, z).columns();
  } else {
    factor = cholesky_full(p);
  }
  const auto lnn = factor.topLeftCorner(z, z).template triangularView<Eigen::Lower>();

  const Vector<Scalar> m_z = m.head(z);
  Matrix<Scalar> z_points = lnn * xi.topRows(z);
  z_points.colwise() += m_z;

  const Vector<Scalar> g_center = plf.nonlinear(m_z);
  const Index gd = plf.g_dim();
  Matrix<Scalar> g_points(gd, n);
  for (Index i = 0; i < n; ++i) g_points.col(i) = plf.nonlinear(Vector<Scalar>(z_points.col(i)));

  const Scalar w_cl = Scalar(1) - weights.sum();
  const Vector<Scalar> mean_g = w_cl * g_center + g_points * weights;
  const Vector<Scalar> u = -mean_g;
  const Vector<Scalar> u_l = g_center + u;

  Matrix<Scalar> dev = g_points;  // G_z + C_z
  dev.colwise() += u;
  const Matrix<Scalar> wgt = weights.asDiagonal() * g_points.transpose();  // W_z G_z^T

  // L Xi_z W_z G_z^T
  Matrix<Scalar> cross_g;
  if (partial) {
    cross_g.noalias() = factor * (xi.topRows(z) * wgt);
  } else {
    cross_g.noalias() = factor.template triangularView<Eigen::Lower>() * (xi * wgt);
  }

  const Matrix<Scalar>& a = plf.linear_map();
  const Index la = a.rows();
  const Matrix<Scalar> pat = p * a.transpose();

  JointGaussian<Scalar> out;
  out.mean_x = m;
  out.cov_xx = p;
  out.mean_y.resize(gd + la);
  out.mean_y.head(gd) = mean_g;
  out.mean_y.tail(la).noalias() = a * m;

  out.cov_xy.resize(x, gd + la);
  out.cov_xy.leftCols(gd) = cross_g;
  out.cov_xy.rightCols(la) = pat;

  out.cov_yy.resize(gd + la, gd + la);
  out.cov_yy.topLeftCorner(gd, gd).noalias() = dev * weights.asDiagonal() * dev.transpose();
  out.cov_yy.topLeftCorner(gd, gd).noalias() += w_cl * u_l * u_l.transpose();
  out.cov_yy.bottomLeftCorner(la, gd).noalias() = a * cross_g;
  out.cov_yy.bottomRightCorner(la, la).noalias() = a * pat;
  mirror_lower(out.cov_yy);

  if (scratch) {
    scratch->w_cl = w_cl;
    scratch->weights = weights;
    scratch->g_center = g_center;
    scratch->g_points = g_points;
    scratch->u = u;
    scratch->u_l = u_l;
    scratch->c_points = u * RowVector<Scalar>::Ones(n);
    scratch->partial_factor = partial;
  }
#ifndef NDEBUG
  {
    PlScratch<Scalar> s{w_cl, weights, g_center, g_points, u, u_l,
                           u * RowVector<Scalar>::Ones(n), partial};
    const Scalar scale = Scalar(1) + g_points.cwiseAbs().maxCoeff() + g_center.cwiseAbs().maxCoeff();
    assert(scratch_residual(s) <= Scalar(1e-13) * scale);
  }
#endif
  return out;
}

namespace detail {

// Rows [a; b; c] -> [a + b; c] with a, b of height g: applies
// M = [[I, I, 0], [0, 0, I]].
template <typename Scalar>
Matrix<Scalar> fold_rows(const Matrix<Scalar>& m, Index g) {
  const Index rest = m.rows() - 2 * g;
  Matrix<Scalar> out(g + rest, m.cols());
  out.topRows(g) = m.topRows(g) + m.middleRows(g, g);
  out.bottomRows(rest) = m.bottomRows(rest);
  return out;
}

}  // namespace detail

/// Moment matching for y = [A1 x + g(z); A2 x]. Matches the auxiliary output
/// o = [g(z); A1 x; A2 x] with match_pl and maps it through
/// M = [[I, I, 0], [0, 0, I]].
template <typename Scalar>
JointGaussian<Scalar> match_general(const PartiallyLinearFunction<Scalar>& plf,
                                    const Vector<Scalar>& m, const Matrix<Scalar>& p,
                                    const ClassifiedRule<Scalar>& cr, bool use_unique = true) {
  if (!plf.additive_map()) return match_pl(plf, m, p, cr, use_unique);

  const Index gd = plf.g_dim();
  const Matrix<Scalar>& a1 = *plf.additive_map();
  const Matrix<Scalar>& a2 = plf.linear_map();
  Matrix<Scalar> stacked(a1.rows() + a2.rows(), plf.x_dim());
  stacked << a1, a2;
  const PartiallyLinearFunction<Scalar> aux(
      plf.z_dim(), gd, [&plf](const Vector<Scalar>& zz) { return plf.nonlinear(zz); },
      std::move(stacked));

  const JointGaussian<Scalar> o = match_pl(aux, m, p, cr, use_unique);
  JointGaussian<Scalar> out;
  out.mean_x = o.mean_x;
  out.cov_xx = o.cov_xx;
  out.mean_y = detail::fold_rows(Matrix<Scalar>(o.mean_y), gd);
  out.cov_xy = detail::fold_rows(Matrix<Scalar>(o.cov_xy.transpose()), gd).transpose();
  const Matrix<Scalar> half = detail::fold_rows(o.cov_yy, gd);
  out.cov_yy = detail::fold_rows(Matrix<Scalar>(half.transpose()), gd);
  mirror_lower(out.cov_yy);
  return out;
}

/// match_general when an additive map is present, match_pl otherwise.
template <typename Scalar>
JointGaussian<Scalar> match_structured(const PartiallyLinearFunction<Scalar>& plf,
                                       const Vector<Scalar>& m, const Matrix<Scalar>& p,
                                       const ClassifiedRule<Scalar>& cr, bool use_unique = true) {
  return plf.additive_map() ? match_general(plf, m, p, cr, use_unique)
                            : match_pl(plf, m, p, cr, use_unique);
}

}  // namespace plkf
