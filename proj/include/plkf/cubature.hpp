#pragma once

// Symmetric cubature rules for Gaussian-weighted integrals in unit space,
// and their partition into central, nonlinear and linear point sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "plkf/errors.hpp"
#include "plkf/types.hpp"

namespace plkf {

enum class RuleKind { Spherical, Unscented, GaussHermite };

inline constexpr std::int64_t kDefaultPointBudget = 10'000'000;

/// Weights w and unit-space points (columns of `points`) such that
///   E[f(x)] ~= sum_i w_i f(m + L xi_i),  x ~ N(m, L L^T).
template <typename Scalar = double>
struct CubatureRule {
  RuleKind kind = RuleKind::Spherical;
  Scalar alpha = 0;   // UT only
  Scalar kappa = 0;   // UT only
  int order = 0;      // GHC only
  Vector<Scalar> weights;
  Matrix<Scalar> points;

  Index dim() const { return points.rows(); }
  Index size() const { return points.cols(); }
};

template <typename Scalar = double>
struct HermiteNodes {
  Vector<Scalar> roots;
  Vector<Scalar> weights;
};

/// Nonlinear points deduplicated by their leading z-block, weights merged.
template <typename Scalar = double>
struct UniqueRule {
  Matrix<Scalar> points;  // Z x U
  Vector<Scalar> weights;
  // Within every group the weighted trailing coordinates sum to zero, so the
  // merged set reproduces the nonlinear sums exactly.
  bool exact = true;

  Index size() const { return points.cols(); }
};

/// A rule split into central (xi = 0), linear (xi nonzero only past the first
/// z_dim coordinates) and nonlinear (everything else) points. Within the
/// nonlinear and linear sets, column i and column n/2 + i are negations of
/// each other with equal weight.
template <typename Scalar = double>
struct ClassifiedRule {
  // Null for a reduced rule that only carries the unique nonlinear set.
  std::shared_ptr<const CubatureRule<Scalar>> base;
  Index x_dim = 0;
  Index z_dim = 0;

  std::vector<Index> central_index;
  std::vector<Index> nonlinear_index;
  std::vector<Index> linear_index;

  Vector<Scalar> weights_c, weights_z, weights_l;
  Matrix<Scalar> points_c, points_z, points_l;

  // Total weight of central and linear points, 1 - sum(weights_z).
  Scalar w_cl = 0;

  UniqueRule<Scalar> unique;

  Index dim() const { return x_dim; }
  bool reduced() const { return base == nullptr; }
  Index num_central() const { return points_c.cols(); }
  Index num_nonlinear() const { return points_z.cols(); }
  Index num_linear() const { return points_l.cols(); }

  // True when no nonlinear point perturbs the trailing (linear) coordinates,
  // so only the first z_dim columns of the Cholesky factor are ever needed.
  bool linear_block_vanishes() const {
    if (reduced()) return true;
    return points_z.bottomRows(dim() - z_dim).isZero(Scalar(0));
  }
};

namespace detail {

template <typename Scalar>
std::vector<Scalar> column_key(const Eigen::Ref<const Matrix<Scalar>>& m, Index col,
                               Index rows) {
  std::vector<Scalar> key(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) key[static_cast<std::size_t>(r)] = m(r, col);
  return key;
}

// Lexicographically "positive": first nonzero coordinate is > 0.
template <typename Scalar>
bool is_positive(const std::vector<Scalar>& key) {
  for (Scalar v : key) {
    if (v > 0) return true;
    if (v < 0) return false;
  }
  return false;
}

// Orthonormal probabilists' Hermite values h_{p-1}(x), h_p(x), where
// h_k = He_k / sqrt(k!).
template <typename Scalar>
std::pair<Scalar, Scalar> normalized_hermite(int p, Scalar x) {
  using std::sqrt;
  Scalar prev = 1;
  Scalar cur = x;
  if (p == 0) return {Scalar(0), prev};
  for (int k = 1; k < p; ++k) {
    const Scalar next = (x * cur - sqrt(Scalar(k)) * prev) / sqrt(Scalar(k + 1));
    prev = cur;
    cur = next;
  }
  return {prev, cur};
}

// Orders the columns of a set that must be closed under negation:
// [sorted positives | their negations in the same order].
template <typename Scalar>
std::vector<Index> symmetric_order(const CubatureRule<Scalar>& rule,
                                   const std::vector<Index>& members,
                                   const char* set_name) {
  using Key = std::vector<Scalar>;
  const Index dim = rule.dim();
  std::vector<std::pair<Key, Index>> positives;
  std::multimap<Key, Index> negatives;
  for (Index i : members) {
    Key key = column_key<Scalar>(rule.points, i, dim);
    if (is_positive(key)) {
      positives.emplace_back(std::move(key), i);
    } else {
      negatives.emplace(std::move(key), i);
    }
  }
  std::stable_sort(positives.begin(), positives.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<Index> order;
  order.reserve(members.size());
  for (const auto& [key, i] : positives) order.push_back(i);
  for (const auto& [key, i] : positives) {
    Key neg = key;
    for (auto& v : neg) v = -v;
    auto [lo, hi] = negatives.equal_range(neg);
    auto hit = std::find_if(lo, hi, [&](const auto& entry) {
      return rule.weights(entry.second) == rule.weights(i);
    });
    if (hit == hi) {
      throw InvalidArgument(std::string("cubature rule is not symmetric in its ") + set_name +
                            " points");
    }
    order.push_back(hit->second);
    negatives.erase(hit);
  }
  if (!negatives.empty()) {
    throw InvalidArgument(std::string("cubature rule is not symmetric in its ") + set_name +
                          " points");
  }
  return order;
}

template <typename Scalar>
void gather(const CubatureRule<Scalar>& rule, const std::vector<Index>& idx,
            Vector<Scalar>& weights, Matrix<Scalar>& points) {
  const auto n = static_cast<Index>(idx.size());
  weights.resize(n);
  points.resize(rule.dim(), n);
  for (Index j = 0; j < n; ++j) {
    weights(j) = rule.weights(idx[static_cast<std::size_t>(j)]);
    points.col(j) = rule.points.col(idx[static_cast<std::size_t>(j)]);
  }
}

}  // namespace detail

/// Spherical cubature: 2X points sqrt(X) * [I, -I], equal weights 1/(2X).
template <typename Scalar = double>
CubatureRule<Scalar> spherical_rule(Index dim) {
  if (dim < 1) throw InvalidArgument("spherical_rule: dimension must be >= 1");
  using std::sqrt;
  CubatureRule<Scalar> rule;
  rule.kind = RuleKind::Spherical;
  rule.weights = Vector<Scalar>::Constant(2 * dim, Scalar(1) / Scalar(2 * dim));
  rule.points.setZero(dim, 2 * dim);
  const Scalar scale = sqrt(Scalar(dim));
  for (Index i = 0; i < dim; ++i) {
    rule.points(i, i) = scale;
    rule.points(i, dim + i) = -scale;
  }
  return rule;
}

/// Unscented transform with lambda = alpha^2 (X + kappa) - X. The same weight
/// set serves mean and covariance (no beta correction on the central weight).
template <typename Scalar = double>
CubatureRule<Scalar> unscented_rule(Index dim, Scalar alpha, Scalar kappa) {
  if (dim < 1) throw InvalidArgument("unscented_rule: dimension must be >= 1");
  if (!(alpha > 0) || !(kappa > 0)) {
    throw InvalidArgument("unscented_rule: alpha and kappa must be > 0");
  }
  using std::sqrt;
  const Scalar spread = alpha * alpha * (Scalar(dim) + kappa);  // lambda + X
  const Scalar lambda = spread - Scalar(dim);

  CubatureRule<Scalar> rule;
  rule.kind = RuleKind::Unscented;
  rule.alpha = alpha;
  rule.kappa = kappa;
  rule.weights.resize(2 * dim + 1);
  rule.weights(0) = lambda / spread;
  rule.weights.tail(2 * dim).setConstant(Scalar(1) / (Scalar(2) * spread));
  rule.points.setZero(dim, 2 * dim + 1);
  const Scalar scale = sqrt(spread);
  for (Index i = 0; i < dim; ++i) {
    rule.points(i, 1 + i) = scale;
    rule.points(i, 1 + dim + i) = -scale;
  }
  return rule;
}

/// Gauss-Hermite nodes for the standard normal weight. Roots are eigenvalues
/// of the Jacobi matrix of the He_k recurrence, Newton-polished on He_p;
/// weights are p! / (p He_{p-1}(r))^2, evaluated in orthonormal form.
template <typename Scalar = double>
HermiteNodes<Scalar> hermite_1d(int order) {
  if (order < 1) throw InvalidArgument("hermite_1d: order must be >= 1");
  using std::abs;
  using std::sqrt;
  const int p = order;

  HermiteNodes<Scalar> nodes;
  nodes.roots.resize(p);
  nodes.weights.resize(p);
  if (p == 1) {
    nodes.roots(0) = 0;
    nodes.weights(0) = 1;
    return nodes;
  }

  Matrix<Scalar> jacobi = Matrix<Scalar>::Zero(p, p);
  for (int k = 1; k < p; ++k) {
    jacobi(k, k - 1) = sqrt(Scalar(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(jacobi, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("hermite_1d: eigenvalue iteration failed for order " +
                         std::to_string(p));
  }
  nodes.roots = eig.eigenvalues();

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  for (int i = 0; i < p; ++i) {
    Scalar& r = nodes.roots(i);
    Scalar step = 0;
    for (int it = 0; it < 5; ++it) {
      const auto [hm1, hp] = detail::normalized_hermite(p, r);
      // He_p / He_p' = h_p / (sqrt(p) h_{p-1})
      step = hp / (sqrt(Scalar(p)) * hm1);
      r -= step;
      if (abs(step) <= 4 * eps * (Scalar(1) + abs(r))) break;
    }
    if (!(abs(step) <= Scalar(1e-8) * (Scalar(1) + abs(r)))) {
      throw NumericalError("hermite_1d: root polish did not converge for order " +
                           std::to_string(p));
    }
  }

  // Enforce exact antisymmetry of roots and symmetry of weights.
  for (int i = 0; i < p / 2; ++i) {
    const Scalar r = (nodes.roots(p - 1 - i) - nodes.roots(i)) / Scalar(2);
    nodes.roots(i) = -r;
    nodes.roots(p - 1 - i) = r;
  }
  if (p % 2 == 1) nodes.roots(p / 2) = 0;

  for (int i = 0; i < p; ++i) {
    const Scalar hm1 = detail::normalized_hermite(p, nodes.roots(i)).first;
    nodes.weights(i) = Scalar(1) / (Scalar(p) * hm1 * hm1);
  }
  for (int i = 0; i < p / 2; ++i) {
    const Scalar w = (nodes.weights(i) + nodes.weights(p - 1 - i)) / Scalar(2);
    nodes.weights(i) = w;
    nodes.weights(p - 1 - i) = w;
  }
  return nodes;
}

/// Tensor-product Gauss-Hermite rule with order^dim points. Grid ordering is
/// lexicographic in the 1-D node indices, first coordinate slowest.
template <typename Scalar = double>
CubatureRule<Scalar> gauss_hermite_rule(Index dim, int order,
                                        std::int64_t max_points = kDefaultPointBudget) {
  if (dim < 1) throw InvalidArgument("gauss_hermite_rule: dimension must be >= 1");
  if (order < 2) throw InvalidArgument("gauss_hermite_rule: order must be >= 2");

  std::int64_t count = 1;
  for (Index d = 0; d < dim; ++d) {
    if (count > max_points / order) {
      throw ResourceLimit("gauss_hermite_rule: " + std::to_string(order) + "^" +
                          std::to_string(dim) + " points exceed the budget of " +
                          std::to_string(max_points));
    }
    count *= order;
  }

  const HermiteNodes<Scalar> nodes = hermite_1d<Scalar>(order);
  CubatureRule<Scalar> rule;
  rule.kind = RuleKind::GaussHermite;
  rule.order = order;
  rule.weights.resize(count);
  rule.points.resize(dim, count);

  std::vector<int> digits(static_cast<std::size_t>(dim), 0);
  for (std::int64_t c = 0; c < count; ++c) {
    Scalar w = 1;
    for (Index d = 0; d < dim; ++d) {
      const int k = digits[static_cast<std::size_t>(d)];
      rule.points(d, c) = nodes.roots(k);
      w *= nodes.weights(k);
    }
    rule.weights(c) = w;
    for (Index d = dim - 1; d >= 0; --d) {
      auto& digit = digits[static_cast<std::size_t>(d)];
      if (++digit < order) break;
      digit = 0;
    }
  }
  return rule;
}

/// Unique leading z-blocks of the nonlinear points, in order of first
/// appearance, each carrying the summed weight of the points sharing it.
template <typename Scalar>
UniqueRule<Scalar> unique_nonlinear(const ClassifiedRule<Scalar>& cr) {
  using Key = std::vector<Scalar>;
  const Index z = cr.z_dim;
  const Index rest = cr.points_z.rows() - z;
  std::map<Key, Index> slot;
  std::vector<Index> first_col;
  std::vector<Scalar> merged;
  std::vector<Vector<Scalar>> linear_sum;
  Scalar scale = 0;
  for (Index j = 0; j < cr.num_nonlinear(); ++j) {
    Key key = detail::column_key<Scalar>(cr.points_z, j, z);
    auto [it, inserted] = slot.emplace(std::move(key), static_cast<Index>(first_col.size()));
    const Scalar w = cr.weights_z(j);
    const auto tail = cr.points_z.col(j).tail(rest);
    if (inserted) {
      first_col.push_back(j);
      merged.push_back(w);
      linear_sum.push_back(w * tail);
    } else {
      merged[static_cast<std::size_t>(it->second)] += w;
      linear_sum[static_cast<std::size_t>(it->second)] += w * tail;
    }
    if (rest > 0) scale = std::max(scale, std::abs(w) * tail.cwiseAbs().maxCoeff());
  }
  UniqueRule<Scalar> u;
  for (const auto& s : linear_sum) {
    if (rest > 0 && s.cwiseAbs().maxCoeff() > Scalar(1e-13) * scale) u.exact = false;
  }
  const auto n = static_cast<Index>(first_col.size());
  u.points.resize(z, n);
  u.weights.resize(n);
  for (Index k = 0; k < n; ++k) {
    u.points.col(k) = cr.points_z.col(first_col[static_cast<std::size_t>(k)]).head(z);
    u.weights(k) = merged[static_cast<std::size_t>(k)];
  }
  return u;
}

/// Partitions `rule` for a function whose nonlinear input is the first
/// `z_dim` coordinates. Canonical column order within the classified rule is
/// [central | z-positives | z-negatives | l-positives | l-negatives].
template <typename Scalar>
ClassifiedRule<Scalar> classify(std::shared_ptr<const CubatureRule<Scalar>> rule, Index z_dim) {
  if (!rule) throw InvalidArgument("classify: null rule");
  if (z_dim < 1 || z_dim > rule->dim()) {
    throw InvalidArgument("classify: z_dim must lie in [1, " + std::to_string(rule->dim()) +
                          "]");
  }
  ClassifiedRule<Scalar> cr;
  cr.base = rule;
  cr.x_dim = rule->dim();
  cr.z_dim = z_dim;

  std::vector<Index> z_members, l_members;
  for (Index i = 0; i < rule->size(); ++i) {
    const auto col = rule->points.col(i);
    if (col.isZero(Scalar(0))) {
      cr.central_index.push_back(i);
    } else if (col.head(z_dim).isZero(Scalar(0))) {
      l_members.push_back(i);
    } else {
      z_members.push_back(i);
    }
  }
  cr.nonlinear_index = detail::symmetric_order(*rule, z_members, "nonlinear");
  cr.linear_index = detail::symmetric_order(*rule, l_members, "linear");

  detail::gather(*rule, cr.central_index, cr.weights_c, cr.points_c);
  detail::gather(*rule, cr.nonlinear_index, cr.weights_z, cr.points_z);
  detail::gather(*rule, cr.linear_index, cr.weights_l, cr.points_l);

  cr.w_cl = Scalar(1) - cr.weights_z.sum();
  cr.unique = unique_nonlinear(cr);
  return cr;
}

template <typename Scalar>
ClassifiedRule<Scalar> classify(const CubatureRule<Scalar>& rule, Index z_dim) {
  return classify(std::make_shared<const CubatureRule<Scalar>>(rule), z_dim);
}

/// Gauss-Hermite rule on R^dim reduced to its unique nonlinear set without
/// materializing the order^dim grid: the unique z-blocks of the tensor grid are
/// the nonzero points of the z_dim-dimensional grid, and each merged weight is
/// the z_dim-dimensional weight (the trailing 1-D weights sum to one).
/// Only usable with unique-point evaluation.
template <typename Scalar = double>
ClassifiedRule<Scalar> reduced_gauss_hermite(Index dim, Index z_dim, int order,
                                             std::int64_t max_points = kDefaultPointBudget) {
  if (z_dim < 1 || z_dim > dim) {
    throw InvalidArgument("reduced_gauss_hermite: z_dim must lie in [1, dim]");
  }
  const ClassifiedRule<Scalar> small = classify(gauss_hermite_rule<Scalar>(z_dim, order, max_points), z_dim);
  ClassifiedRule<Scalar> cr;
  cr.x_dim = dim;
  cr.z_dim = z_dim;
  cr.unique.points = small.points_z;
  cr.unique.weights = small.weights_z;
  cr.w_cl = Scalar(1) - cr.unique.weights.sum();
  return cr;
}

}  // namespace plkf
