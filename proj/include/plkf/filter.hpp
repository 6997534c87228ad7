#pragma once

// Linear-regression Kalman filters with additive noise: the plain cubature
// recursion and the partially-linear recursion that permutes the state so the
// nonlinear inputs lead, and evaluates moments through match_structured.

#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <string>

#include "plkf/cubature.hpp"
#include "plkf/errors.hpp"
#include "plkf/linalg.hpp"
#include "plkf/moments.hpp"
#include "plkf/types.hpp"

namespace plkf {

/// Thrown (with the original error nested) when a filter step fails.
class FilterStepError : public Error {
 public:
  FilterStepError(std::int64_t step, const std::string& what)
      : Error("filter step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

struct RuleSpec {
  RuleKind kind = RuleKind::Spherical;
  double alpha = 1.0;
  double kappa = 2.0;
  int order = 3;
  std::int64_t point_budget = kDefaultPointBudget;
};

template <typename Scalar = double>
CubatureRule<Scalar> make_rule(const RuleSpec& spec, Index dim) {
  switch (spec.kind) {
    case RuleKind::Spherical:
      return spherical_rule<Scalar>(dim);
    case RuleKind::Unscented:
      return unscented_rule<Scalar>(dim, Scalar(spec.alpha), Scalar(spec.kappa));
    case RuleKind::GaussHermite:
      return gauss_hermite_rule<Scalar>(dim, spec.order, spec.point_budget);
  }
  throw InvalidArgument("make_rule: unknown rule kind");
}

/// A partially linear map expressed on the permuted state perm(x).
template <typename Scalar = double>
struct StructuredMap {
  PartiallyLinearFunction<Scalar> map;
  Permutation perm;
};

/// Additive-noise model
///   x_{k+1} = F(x_k) + q_k,  y_k = H(x_k) + r_k.
/// The flow map consumes and produces permuted states: F(x) = T_F^T F_bar(T_F x).
/// The measurement map consumes the permuted state: H(x) = H_bar(T_H x).
template <typename Scalar = double>
class EstimationModel {
 public:
  EstimationModel(StructuredMap<Scalar> flow, Matrix<Scalar> process_noise,
                  StructuredMap<Scalar> measurement, Matrix<Scalar> measurement_noise,
                  const RuleSpec& flow_rule, const RuleSpec& measurement_rule)
      : flow_(std::move(flow)),
        measurement_(std::move(measurement)),
        process_noise_(std::move(process_noise)),
        measurement_noise_(std::move(measurement_noise)) {
    const Index x = flow_.map.x_dim();
    if (flow_.map.output_dim() != x || flow_.perm.size() != x) {
      throw InvalidArgument("EstimationModel: flow must map R^X to R^X with an X-permutation");
    }
    if (measurement_.map.x_dim() != x || measurement_.perm.size() != x) {
      throw InvalidArgument("EstimationModel: measurement input dimension differs from X");
    }
    check_spd(process_noise_, x, "process noise");
    check_spd(measurement_noise_, measurement_.map.output_dim(), "measurement noise");

    auto fr = std::make_shared<const CubatureRule<Scalar>>(make_rule<Scalar>(flow_rule, x));
    auto hr = std::make_shared<const CubatureRule<Scalar>>(make_rule<Scalar>(measurement_rule, x));
    flow_rule_ = classify(fr, flow_.map.z_dim());
    measurement_rule_ = classify(hr, measurement_.map.z_dim());
  }

  Index state_dim() const { return flow_.map.x_dim(); }
  Index measurement_dim() const { return measurement_.map.output_dim(); }

  const StructuredMap<Scalar>& flow() const { return flow_; }
  const StructuredMap<Scalar>& measurement() const { return measurement_; }
  const Matrix<Scalar>& process_noise() const { return process_noise_; }
  const Matrix<Scalar>& measurement_noise() const { return measurement_noise_; }
  const ClassifiedRule<Scalar>& flow_rule() const { return flow_rule_; }
  const ClassifiedRule<Scalar>& measurement_rule() const { return measurement_rule_; }

  Vector<Scalar> flow_full(const Vector<Scalar>& x) const {
    return flow_.perm.inverse().apply(Vector<Scalar>(flow_.map(flow_.perm.apply(x))));
  }

  Vector<Scalar> measurement_full(const Vector<Scalar>& x) const {
    return measurement_.map(measurement_.perm.apply(x));
  }

 private:
  static void check_spd(const Matrix<Scalar>& m, Index n, const char* what) {
    if (m.rows() != n || m.cols() != n) {
      throw InvalidArgument(std::string("EstimationModel: ") + what + " has wrong size");
    }
    Eigen::LLT<Matrix<Scalar>> llt(symmetrized(m));
    if (llt.info() != Eigen::Success || (m - m.transpose()).cwiseAbs().maxCoeff() >
                                            Scalar(kSymmetryTolerance) * m.cwiseAbs().maxCoeff()) {
      throw InvalidArgument(std::string("EstimationModel: ") + what +
                            " must be symmetric positive definite");
    }
  }

  StructuredMap<Scalar> flow_;
  StructuredMap<Scalar> measurement_;
  Matrix<Scalar> process_noise_;
  Matrix<Scalar> measurement_noise_;
  ClassifiedRule<Scalar> flow_rule_;
  ClassifiedRule<Scalar> measurement_rule_;
};

template <typename Scalar = double>
struct StepDiagnostics {
  GaussianMoments<Scalar> predicted;
  Vector<Scalar> mean_y;
  Matrix<Scalar> cov_yy;  // innovation covariance, noise included
  Matrix<Scalar> cov_xy;
};

template <typename Scalar = double>
struct FilterState {
  std::int64_t k = 0;
  GaussianMoments<Scalar> posterior;
  std::optional<StepDiagnostics<Scalar>> diagnostics;
};

struct StepOptions {
  bool keep_diagnostics = false;
  bool use_unique = true;
};

/// Gaussian conditioning on y:
///   m+ = m + K (y - m^y),  P+ = P - K P^yy K^T,  K = P^xy (P^yy)^-1,
/// with K obtained from a Cholesky solve against P^yy.
template <typename Scalar>
GaussianMoments<Scalar> kalman_update(const GaussianMoments<Scalar>& prior,
                                      const JointGaussian<Scalar>& joint, const Vector<Scalar>& y) {
  const Index x = prior.dim();
  const Index ny = joint.mean_y.size();
  if (joint.cov_xy.rows() != x || joint.cov_xy.cols() != ny || joint.cov_yy.rows() != ny ||
      joint.cov_yy.cols() != ny || y.size() != ny || prior.cov.rows() != x) {
    throw InvalidArgument("kalman_update: inconsistent dimensions");
  }
  Eigen::LLT<Matrix<Scalar>> llt(symmetrized(joint.cov_yy));
  if (llt.info() != Eigen::Success) {
    throw InnovationDegenerate("kalman_update: innovation covariance is not positive definite");
  }
  const Matrix<Scalar> gain = llt.solve(joint.cov_xy.transpose()).transpose();

  GaussianMoments<Scalar> post;
  post.mean = prior.mean + gain * (y - joint.mean_y);
  post.cov = prior.cov - gain * joint.cov_yy * gain.transpose();
  post.cov = symmetrized(post.cov);
  return post;
}

namespace detail {

template <typename Scalar>
void require_spd(const Matrix<Scalar>& cov) {
  if (Eigen::LLT<Matrix<Scalar>>(cov).info() != Eigen::Success) {
    cholesky_partial(cov, cov.rows());  // reports the failing pivot
    throw NotPositiveDefinite(cov.rows() - 1);
  }
}

template <typename Scalar, typename Body>
FilterState<Scalar> guarded_step(const FilterState<Scalar>& state, const Vector<Scalar>& y,
                                 Index y_dim, Body&& body) {
  const std::int64_t step = state.k + 1;
  try {
    if (y.size() != y_dim) {
      throw InvalidArgument("measurement has " + std::to_string(y.size()) + " entries, expected " +
                            std::to_string(y_dim));
    }
    FilterState<Scalar> next = body();
    next.k = step;
    require_spd(next.posterior.cov);
    return next;
  } catch (const Error& e) {
    std::throw_with_nested(FilterStepError(step, e.what()));
  }
}

}  // namespace detail

/// One step of the plain cubature filter: both moment integrals are
/// evaluated with every point of the full rules.
template <typename Scalar>
FilterState<Scalar> lrkf_step(const FilterState<Scalar>& state, const EstimationModel<Scalar>& model,
                              const Vector<Scalar>& y, const StepOptions& opts = {}) {
  return detail::guarded_step(state, y, model.measurement_dim(), [&] {
    const auto& post = state.posterior;
    const JointGaussian<Scalar> flow = match_full(
        [&](const Vector<Scalar>& x) { return model.flow_full(x); }, post.mean, post.cov,
        *model.flow_rule().base);
    GaussianMoments<Scalar> predicted{flow.mean_y, flow.cov_yy + model.process_noise()};

    JointGaussian<Scalar> joint = match_full(
        [&](const Vector<Scalar>& x) { return model.measurement_full(x); }, predicted.mean,
        predicted.cov, *model.measurement_rule().base);
    joint.cov_yy += model.measurement_noise();

    FilterState<Scalar> next;
    next.posterior = kalman_update(predicted, joint, y);
    if (opts.keep_diagnostics) {
      next.diagnostics = StepDiagnostics<Scalar>{predicted, joint.mean_y, joint.cov_yy, joint.cov_xy};
    }
    return next;
  });
}

/// One step of the partially-linear filter:
///   permute by T_F, match the flow on its leading nonlinear block, add Q,
///   permute back; permute by T_H, match the measurement, add R, condition,
///   permute back.
template <typename Scalar>
FilterState<Scalar> pl_lrkf_step(const FilterState<Scalar>& state,
                                 const EstimationModel<Scalar>& model, const Vector<Scalar>& y,
                                 const StepOptions& opts = {}) {
  return detail::guarded_step(state, y, model.measurement_dim(), [&] {
    const Permutation& tf = model.flow().perm;
    const Permutation& th = model.measurement().perm;

    const GaussianMoments<Scalar> prior_f = permute_moments(tf, state.posterior);
    const JointGaussian<Scalar> flow = match_structured(model.flow().map, prior_f.mean, prior_f.cov,
                                                        model.flow_rule(), opts.use_unique);
    const GaussianMoments<Scalar> predicted = permute_moments(
        tf.inverse(), flow.mean_y, Matrix<Scalar>(flow.cov_yy + tf.apply(model.process_noise())));

    const GaussianMoments<Scalar> prior_h = permute_moments(th, predicted);
    JointGaussian<Scalar> joint = match_structured(model.measurement().map, prior_h.mean,
                                                   prior_h.cov, model.measurement_rule(),
                                                   opts.use_unique);
    joint.cov_yy += model.measurement_noise();

    FilterState<Scalar> next;
    next.posterior = permute_moments(th.inverse(), kalman_update(prior_h, joint, y));
    if (opts.keep_diagnostics) {
      next.diagnostics = StepDiagnostics<Scalar>{
          predicted, joint.mean_y, joint.cov_yy,
          th.inverse().apply_rows(Matrix<Scalar>(joint.cov_xy))};
    }
    return next;
  });
}

}  // namespace plkf
