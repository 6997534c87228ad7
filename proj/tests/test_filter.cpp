#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "plkf/errors.hpp"
#include "plkf/filter.hpp"
#include "plkf/models.hpp"
#include "plkf/rng.hpp"

using namespace plkf;

namespace {

Matrix<double> random_spd(Rng& rng, Index n, double shift) {
  const Matrix<double> b = rng.normal_matrix(n, n);
  Matrix<double> p = b * b.transpose() / static_cast<double>(n);
  p.diagonal().array() += shift;
  return p;
}

bool is_spd(const Matrix<double>& p) {
  return Eigen::SelfAdjointEigenSolver<Matrix<double>>(p).eigenvalues().minCoeff() > 0;
}

StructuredMap<double> linear_map(const Matrix<double>& m) { return models::linear_structured_map(m); }

struct TextbookKf {
  Matrix<double> b, c, q, r;
  GaussianMoments<double> step(const GaussianMoments<double>& s, const Vector<double>& y) const {
    const Vector<double> mp = b * s.mean;
    const Matrix<double> pp = b * s.cov * b.transpose() + q;
    const Matrix<double> sy = c * pp * c.transpose() + r;
    const Matrix<double> k = pp * c.transpose() * sy.inverse();
    return {mp + k * (y - c * mp), pp - k * sy * k.transpose()};
  }
};

// Mildly nonlinear flow on all X coordinates and a measurement whose first
// two coordinates enter nonlinearly.
EstimationModel<double> nonlinear_model(Index x, const Permutation& flow_perm,
                                        const Permutation& meas_perm, const RuleSpec& rule,
                                        std::uint64_t seed, const Permutation* relabel = nullptr) {
  Rng rng(seed);
  Matrix<double> q = random_spd(rng, x, 0.2) * 0.1;
  if (relabel) q = relabel->apply(q);
  const Matrix<double> mix = rng.normal_matrix(x, x) * 0.1;
  PartiallyLinearFunction<double> flow(
      x, x,
      [mix](const Vector<double>& v) {
        return Vector<double>(v + mix * v.array().sin().matrix());
      },
      Matrix<double>(0, x));
  const Matrix<double> a = rng.normal_matrix(3, x);
  PartiallyLinearFunction<double> meas(
      2, 2,
      [](const Vector<double>& z) {
        Vector<double> out(2);
        out << std::atan2(z(1), 3.0 + z(0)), z.squaredNorm();
        return out;
      },
      a);
  const Matrix<double> r = random_spd(rng, 5, 0.5) * 0.05;
  return EstimationModel<double>({flow, flow_perm}, q, {meas, meas_perm}, r, rule, rule);
}

std::vector<RuleSpec> rules() {
  RuleSpec sc;
  RuleSpec ut;
  ut.kind = RuleKind::Unscented;
  RuleSpec gh;
  gh.kind = RuleKind::GaussHermite;
  gh.order = 3;
  return {sc, ut, gh};
}

}  // namespace

TEST_CASE("kalman_update: scalar example") {
  GaussianMoments<double> prior{Vector<double>::Zero(1), Matrix<double>::Identity(1, 1)};
  JointGaussian<double> j;
  j.mean_x = prior.mean;
  j.cov_xx = prior.cov;
  j.mean_y = Vector<double>::Zero(1);
  j.cov_xy = Matrix<double>::Constant(1, 1, 0.5);
  j.cov_yy = Matrix<double>::Constant(1, 1, 1.25);
  const auto post = kalman_update(prior, j, Vector<double>(Vector<double>::Ones(1)));
  CHECK(post.mean(0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(post.cov(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("kalman_update: zero innovation and uninformative measurement") {
  Rng rng(1);
  const Index x = 4, y = 3;
  GaussianMoments<double> prior{rng.normal_vector(x), random_spd(rng, x, 0.5)};
  JointGaussian<double> j;
  j.mean_y = rng.normal_vector(y);
  j.cov_xy = rng.normal_matrix(x, y) * 0.2;
  j.cov_yy = random_spd(rng, y, 1.0);

  const auto post = kalman_update(prior, j, j.mean_y);
  CHECK(post.mean == prior.mean);
  const Matrix<double> expected =
      prior.cov - j.cov_xy * j.cov_yy.inverse() * j.cov_xy.transpose();
  CHECK((post.cov - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(post.cov == post.cov.transpose());

  j.cov_xy.setZero();
  const auto same = kalman_update(prior, j, rng.normal_vector(y));
  CHECK(same.mean == prior.mean);
  CHECK(same.cov == prior.cov);

  j.cov_yy(0, 0) = -1;
  CHECK_THROWS_AS(kalman_update(prior, j, j.mean_y), InnovationDegenerate);
  CHECK_THROWS_AS(kalman_update(prior, j, Vector<double>(Vector<double>::Zero(2))),
                  InvalidArgument);
}

TEST_CASE("linear model: both filters reproduce the Kalman recursion") {
  Rng rng(7);
  const Index x = 6, ny = 3;
  TextbookKf kf{rng.normal_matrix(x, x) * 0.1, rng.normal_matrix(ny, x), random_spd(rng, x, 0.1),
                random_spd(rng, ny, 0.3)};
  kf.b.diagonal().array() += 0.7;
  CHECK(kf.b.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
  for (const auto& rule : rules()) {
    const EstimationModel<double> model(linear_map(kf.b), kf.q, linear_map(kf.c), kf.r, rule, rule);
    FilterState<double> a, b;
    a.posterior = {rng.normal_vector(x), random_spd(rng, x, 1.0)};
    b = a;
    GaussianMoments<double> ref = a.posterior;
    Vector<double> truth = rng.normal_vector(x);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
      truth = kf.b * truth + rng.normal_vector(x) * 0.3;
      const Vector<double> y = kf.c * truth + rng.normal_vector(ny) * 0.3;
      ref = kf.step(ref, y);
      a = lrkf_step(a, model, y);
      b = pl_lrkf_step(b, model, y);
      const double scale = 1 + ref.mean.cwiseAbs().maxCoeff() + ref.cov.cwiseAbs().maxCoeff();
      for (const auto* s : {&a, &b}) {
        worst = std::max(worst, (s->posterior.mean - ref.mean).cwiseAbs().maxCoeff() / scale);
        worst = std::max(worst, (s->posterior.cov - ref.cov).cwiseAbs().maxCoeff() / scale);
      }
    }
    CHECK(a.k == 100);
    CHECK(b.k == 100);
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("huge process noise: posterior moves toward the measurement") {
  Rng rng(8);
  const Index x = 3;
  const Matrix<double> c = Matrix<double>::Identity(x, x);
  const EstimationModel<double> model(linear_map(Matrix<double>::Identity(x, x)),
                                      Matrix<double>::Identity(x, x) * 1e6, linear_map(c),
                                      Matrix<double>::Identity(x, x) * 0.01, {}, {});
  FilterState<double> s;
  s.posterior = {Vector<double>::Zero(x), Matrix<double>::Identity(x, x)};
  const Vector<double> y = Vector<double>::Constant(x, 50.0);
  const auto next = pl_lrkf_step(s, model, y);
  CHECK((c * next.posterior.mean - y).norm() < 1e-3 * (c * s.posterior.mean - y).norm());
}

TEST_CASE("fusion scenario with one agent: one finite SPD step") {
  models::SingerParams singer;
  const models::BearingSensorParams sensor;
  const auto model = models::fusion_model(singer, sensor);
  Vector<double> truth = Vector<double>::Zero(9);
  truth.head(3) << 30, 40, 20;
  FilterState<double> s;
  s.posterior = {truth + Vector<double>::Constant(9, 0.5), Matrix<double>::Identity(9, 9)};
  const Vector<double> y = model.measurement_full(truth);
  for (const auto& next : {lrkf_step(s, model, y), pl_lrkf_step(s, model, y)}) {
    CHECK(next.posterior.mean.allFinite());
    CHECK(next.posterior.cov.allFinite());
    CHECK(is_spd(next.posterior.cov));
  }
}

TEST_CASE("algorithm equivalence on the tracking scenario, N = 3, K = 100") {
  models::SingerParams singer;
  singer.agents = 3;
  const models::BearingSensorParams sensor;
  for (const auto& rule : rules()) {
    if (rule.kind == RuleKind::GaussHermite) continue;  // 3^27 points
    const auto model = models::fusion_model(singer, sensor, rule, rule);
    const auto flow = models::singer_model(singer);
    const Matrix<double> lq = cholesky_full(model.process_noise());
    const Matrix<double> lr = cholesky_full(model.measurement_noise());
    Rng rng(21);
    Vector<double> truth(27);
    for (int i = 0; i < 3; ++i) {
      truth.segment(9 * i, 9) = rng.normal_vector(9);
      truth.segment(9 * i, 3) += Vector<double>::Constant(3, 40.0 + 10 * i);
    }
    FilterState<double> a;
    a.posterior = {truth + rng.normal_vector(27), Matrix<double>::Identity(27, 27)};
    FilterState<double> b = a;
    StepOptions opts;
    opts.keep_diagnostics = true;
    for (int k = 0; k < 100; ++k) {
      truth = flow.transition * truth + lq * rng.normal_vector(27);
      const Vector<double> y = model.measurement_full(truth) + lr * rng.normal_vector(33);
      a = lrkf_step(a, model, y, opts);
      b = pl_lrkf_step(b, model, y, opts);
      CHECK((a.posterior.mean - b.posterior.mean).norm() <= 1e-8);
      CHECK((a.posterior.cov - b.posterior.cov).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(is_spd(b.posterior.cov));
      REQUIRE(a.diagnostics);
      REQUIRE(b.diagnostics);
      CHECK((a.diagnostics->mean_y - b.diagnostics->mean_y).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((a.diagnostics->cov_xy - b.diagnostics->cov_xy).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("Z = X with identity permutations: partially linear step equals the plain step") {
  const Index x = 4;
  for (const auto& rule : rules()) {
    Rng rng(30);
    PartiallyLinearFunction<double> flow(
        x, x, [](const Vector<double>& v) { return Vector<double>(v + 0.1 * v.array().sin().matrix()); },
        Matrix<double>(0, x));
    PartiallyLinearFunction<double> meas(
        x, 2,
        [](const Vector<double>& v) {
          Vector<double> o(2);
          o << v.squaredNorm(), std::sin(v(0)) + v(3);
          return o;
        },
        Matrix<double>(0, x));
    const EstimationModel<double> model({flow, Permutation::identity(x)}, random_spd(rng, x, 0.1),
                                        {meas, Permutation::identity(x)},
                                        random_spd(rng, 2, 0.5), rule, rule);
    FilterState<double> a;
    a.posterior = {rng.normal_vector(x), random_spd(rng, x, 0.5)};
    FilterState<double> b = a;
    for (int k = 0; k < 10; ++k) {
      const Vector<double> y = rng.normal_vector(2);
      a = lrkf_step(a, model, y);
      b = pl_lrkf_step(b, model, y);
      const double scale = 1 + a.posterior.cov.cwiseAbs().maxCoeff() + a.posterior.mean.cwiseAbs().maxCoeff();
      CHECK((a.posterior.mean - b.posterior.mean).cwiseAbs().maxCoeff() <= 1e-12 * scale);
      CHECK((a.posterior.cov - b.posterior.cov).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    }
  }
}

TEST_CASE("permutation round trip: relabeled model gives relabeled posteriors") {
  const Index x = 6;
  const Permutation t({4, 1, 5, 0, 3, 2});
  for (const auto& rule : rules()) {
    const auto permuted = nonlinear_model(x, t, t, rule, 5);
    const auto relabeled =
        nonlinear_model(x, Permutation::identity(x), Permutation::identity(x), rule, 5, &t);
    Rng rng(31);
    FilterState<double> a;
    a.posterior = {rng.normal_vector(x), random_spd(rng, x, 0.5)};
    FilterState<double> b;
    b.posterior = permute_moments(t, a.posterior);
    for (int k = 0; k < 10; ++k) {
      const Vector<double> y = rng.normal_vector(5);
      a = pl_lrkf_step(a, permuted, y);
      b = pl_lrkf_step(b, relabeled, y);
      const auto back = permute_moments(t, a.posterior);
      CHECK((back.mean - b.posterior.mean).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((back.cov - b.posterior.cov).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

// With a generic permutation the Cholesky factor of T P T^T is not the
// permuted factor of P, so the two filters place different points. They still
// agree whenever the rule integrates every moment exactly: a quadratic
// measurement under Gauss-Hermite p = 3 is such a case.
TEST_CASE("generic permutation: plain and partially linear filters agree when the rule is exact") {
  const Index x = 5;
  const Permutation t({3, 0, 4, 2, 1});
  RuleSpec gh;
  gh.kind = RuleKind::GaussHermite;
  gh.order = 3;
  Rng rng(32);
  Matrix<double> b = rng.normal_matrix(x, x) * 0.1;
  b.diagonal().array() += 0.8;
  const Matrix<double> a = rng.normal_matrix(2, x);
  PartiallyLinearFunction<double> meas(
      2, 2,
      [](const Vector<double>& z) {
        Vector<double> o(2);
        o << z(0) * z(1), z.squaredNorm();
        return o;
      },
      a);
  const EstimationModel<double> model(linear_map(b), random_spd(rng, x, 0.2) * 0.1, {meas, t},
                                      random_spd(rng, 4, 0.5), gh, gh);
  FilterState<double> c;
  c.posterior = {rng.normal_vector(x), random_spd(rng, x, 0.5)};
  FilterState<double> d = c;
  for (int k = 0; k < 20; ++k) {
    const Vector<double> y = rng.normal_vector(4);
    c = lrkf_step(c, model, y);
    d = pl_lrkf_step(d, model, y);
    CHECK((c.posterior.mean - d.posterior.mean).norm() <= 1e-8);
    CHECK((c.posterior.cov - d.posterior.cov).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("filter errors carry the step index") {
  const Index x = 3;
  const EstimationModel<double> model(linear_map(Matrix<double>::Identity(x, x)),
                                      Matrix<double>::Identity(x, x), linear_map(Matrix<double>::Identity(2, x)),
                                      Matrix<double>::Identity(2, 2), {}, {});
  FilterState<double> s;
  s.k = 4;
  s.posterior = {Vector<double>::Zero(x), Matrix<double>::Identity(x, x)};
  try {
    pl_lrkf_step(s, model, Vector<double>(Vector<double>::Zero(3)));
    FAIL("expected FilterStepError");
  } catch (const FilterStepError& e) {
    CHECK(e.step() == 5);
    CHECK_THROWS_AS(std::rethrow_if_nested(e), InvalidArgument);
  }
  s.posterior.cov(1, 1) = -2;
  try {
    lrkf_step(s, model, Vector<double>(Vector<double>::Zero(2)));
    FAIL("expected FilterStepError");
  } catch (const FilterStepError& e) {
    CHECK(e.step() == 5);
    CHECK_THROWS_AS(std::rethrow_if_nested(e), NotPositiveDefinite);
  }

  CHECK_THROWS_AS(EstimationModel<double>(linear_map(Matrix<double>::Identity(x, x)),
                                          -Matrix<double>::Identity(x, x),
                                          linear_map(Matrix<double>::Identity(2, x)),
                                          Matrix<double>::Identity(2, 2), {}, {}),
                  InvalidArgument);
  CHECK_THROWS_AS(EstimationModel<double>(linear_map(Matrix<double>::Identity(x, x)),
                                          Matrix<double>::Identity(x, x),
                                          linear_map(Matrix<double>::Identity(2, 4)),
                                          Matrix<double>::Identity(2, 2), {}, {}),
                  InvalidArgument);
}
