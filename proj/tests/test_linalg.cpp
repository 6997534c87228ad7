#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "plkf/errors.hpp"
#include "plkf/linalg.hpp"
#include "plkf/rng.hpp"

using namespace plkf;

namespace {

Matrix<double> random_spd(Rng& rng, Index n) {
  const Matrix<double> b = rng.normal_matrix(n, n);
  Matrix<double> p = b * b.transpose() / static_cast<double>(n);
  p.diagonal().array() += 0.5;
  return p;
}

// Row-by-row (Banachiewicz) Cholesky, written independently of the library.
Matrix<double> banachiewicz(const Matrix<double>& p) {
  const Index n = p.rows();
  Matrix<double> l = Matrix<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      double s = p(i, j);
      for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = (i == j) ? std::sqrt(s) : s / l(j, j);
    }
  }
  return l;
}

}  // namespace

TEST_CASE("cholesky_full: examples") {
  CHECK(cholesky_full(Matrix<double>(Matrix<double>::Identity(4, 4))) ==
        Matrix<double>::Identity(4, 4));

  Matrix<double> p(2, 2);
  p << 4, 2, 2, 5;
  Matrix<double> expected(2, 2);
  expected << 2, 0, 1, 2;
  CHECK(cholesky_full(p).isApprox(expected, 1e-15));

  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Matrix<double> a = random_spd(rng, 2 + t % 20);
    const Matrix<double> l = cholesky_full(a);
    CHECK((l * l.transpose() - a).norm() / a.norm() <= 1e-12);
    CHECK(l.isLowerTriangular(0.0));
    CHECK((l.diagonal().array() > 0).all());
    CHECK((l - banachiewicz(a)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("cholesky_partial: examples") {
  const Matrix<double> i5 = Matrix<double>::Identity(5, 5);
  const auto f = cholesky_partial(i5, 2);
  CHECK(f.lnn == Matrix<double>::Identity(2, 2));
  CHECK(f.lln == Matrix<double>::Zero(3, 2));
  CHECK(f.dim() == 5);

  Rng rng(3);
  const Matrix<double> p = random_spd(rng, 8);
  const auto f3 = cholesky_partial(p, 3);
  CHECK(f3.lnn.isLowerTriangular(0.0));
  CHECK((f3.columns() - cholesky_full(p).leftCols(3)).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((f3.columns() - banachiewicz(p).leftCols(3)).cwiseAbs().maxCoeff() <= 1e-13);

  const Matrix<double> full = cholesky_partial(p, 8).columns();
  CHECK((full - cholesky_full(p)).cwiseAbs().maxCoeff() <= 1e-13);

  CHECK_THROWS_AS(cholesky_partial(p, 0), InvalidArgument);
  CHECK_THROWS_AS(cholesky_partial(p, 9), InvalidArgument);
}

TEST_CASE("cholesky_partial agrees with the full factor on 1000 seeded matrices") {
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    Rng rng(Rng::derive(2024, static_cast<std::uint64_t>(i)));
    const Index x = 2 + i % 39;
    const Matrix<double> p = random_spd(rng, x);
    const Matrix<double> l = cholesky_full(p);
    for (Index z = 1; z <= x; ++z) {
      worst = std::max(worst, (cholesky_partial(p, z).columns() - l.leftCols(z)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-13);
}

TEST_CASE("cholesky errors") {
  Rng rng(5);
  const Matrix<double> p = random_spd(rng, 6);
  Eigen::SelfAdjointEigenSolver<Matrix<double>> es(p);
  Vector<double> ev = es.eigenvalues();
  ev(0) = -ev(0);  // flip the smallest eigenvalue
  const Matrix<double> indefinite = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  CHECK_THROWS_AS(cholesky_full(indefinite), NotPositiveDefinite);

  Matrix<double> zero_pivot = Matrix<double>::Identity(3, 3);
  zero_pivot(1, 1) = 0.0;
  try {
    cholesky_full(zero_pivot);
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot() == 1);
  }
  // Only the leading Z pivots are inspected by the partial factor.
  CHECK_NOTHROW(cholesky_partial(zero_pivot, 1));
  CHECK_THROWS_AS(cholesky_partial(zero_pivot, 2), NotPositiveDefinite);

  Matrix<double> asym = Matrix<double>::Identity(3, 3);
  asym(0, 1) = 1e-3;
  CHECK_THROWS_AS(cholesky_full(asym), InvalidArgument);
  CHECK_THROWS_AS(cholesky_partial(asym, 2), InvalidArgument);

  // Roundoff-level asymmetry is tolerated.
  Matrix<double> nearly = p;
  nearly(0, 1) += 1e-14;
  CHECK_NOTHROW(cholesky_full(nearly));

  CHECK_THROWS_AS(cholesky_full(Matrix<double>(2, 3)), InvalidArgument);
}

TEST_CASE("permutation basics") {
  CHECK_THROWS_AS(Permutation({0, 0, 1}), InvalidArgument);
  CHECK_THROWS_AS(Permutation({0, 3, 1}), InvalidArgument);

  const Permutation id = Permutation::identity(4);
  CHECK(id.is_identity());
  Vector<double> v(4);
  v << 1, 2, 3, 4;
  CHECK(id.apply(v) == v);

  const Permutation rev({1, 0});
  Vector<double> m(2);
  m << 1, 2;
  Matrix<double> p(2, 2);
  p << 1, 0.5, 0.5, 2;
  const auto out = permute_moments(rev, m, p);
  Vector<double> em(2);
  em << 2, 1;
  Matrix<double> ep(2, 2);
  ep << 2, 0.5, 0.5, 1;
  CHECK(out.mean == em);
  CHECK(out.cov == ep);

  CHECK_THROWS_AS(rev.apply(v), InvalidArgument);
  CHECK_THROWS_AS(permute_moments(rev, v, p), InvalidArgument);
}

TEST_CASE("permutation round trip and spectrum") {
  Rng rng(99);
  for (int t = 0; t < 30; ++t) {
    const Index n = 2 + t;
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const Permutation t_perm(order);
    const Vector<double> m = rng.normal_vector(n);
    const Matrix<double> p = random_spd(rng, n);

    const auto fwd = permute_moments(t_perm, m, p);
    for (Index i = 0; i < n; ++i) {
      CHECK(fwd.mean(i) == m(order[static_cast<std::size_t>(i)]));
    }
    const auto back = permute_moments(t_perm.inverse(), fwd);
    CHECK(back.mean == m);
    CHECK(back.cov == p);

    // Dense oracle T with T(i, order[i]) = 1.
    Matrix<double> dense = Matrix<double>::Zero(n, n);
    for (Index i = 0; i < n; ++i) dense(i, order[static_cast<std::size_t>(i)]) = 1;
    CHECK(fwd.cov == dense * p * dense.transpose());

    const Vector<double> e0 = Eigen::SelfAdjointEigenSolver<Matrix<double>>(p).eigenvalues();
    const Vector<double> e1 = Eigen::SelfAdjointEigenSolver<Matrix<double>>(fwd.cov).eigenvalues();
    CHECK((e0 - e1).cwiseAbs().maxCoeff() <= 1e-12 * (1 + e0.cwiseAbs().maxCoeff()));
  }
}
