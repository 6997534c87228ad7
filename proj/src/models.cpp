#include "plkf/models.hpp"

#include <array>
#include <cmath>
#include <string>

#include "plkf/errors.hpp"
#include "plkf/rng.hpp"

namespace plkf::models {

namespace {

// B(x) = sum_k poly[k] x^k + a e^{-x} + b x e^{-x} + c e^{-2x}, known to
// vanish to order `lead`. For x < 1 the Taylor series from x^lead is summed
// directly, so the cancellation among the O(1) terms never happens.
struct ExpCombo {
  std::array<double, 4> poly{};
  double a = 0, b = 0, c = 0;
  int lead = 0;

  double operator()(double x) const {
    if (x >= 1.0) {
      const double e1 = std::exp(-x);
      return poly[0] + x * (poly[1] + x * (poly[2] + x * poly[3])) + a * e1 + b * x * e1 +
             c * std::exp(-2.0 * x);
    }
    double sum = 0.0;
    double fact = 1.0;  // k!
    for (int k = 2; k <= lead; ++k) fact *= k;
    double xk = std::pow(x, lead);
    for (int k = lead; k < lead + 40; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      double coeff = (k < 4 ? poly[static_cast<std::size_t>(k)] : 0.0) + a * sign / fact +
                     c * std::pow(-2.0, k) / fact;
      if (k >= 1) coeff += b * (-sign) * k / fact;  // (-1)^{k-1} / (k-1)!
      sum += coeff * xk;
      xk *= x;
      fact *= (k + 1);
    }
    return sum;
  }
};

}  // namespace

void SingerParams::validate() const {
  if (!(dt > 0) || !(tau > 0) || !(maneuver_variance > 0) || agents < 1) {
    throw InvalidArgument("SingerParams: dt, tau, maneuver variance must be > 0 and agents >= 1");
  }
}

void BearingSensorParams::validate(int agents) const {
  if (!(sigma_alpha > 0)) throw InvalidArgument("BearingSensorParams: sigma_alpha must be > 0");
  if (reported_cov.size() != 1 && reported_cov.size() != static_cast<std::size_t>(agents)) {
    throw InvalidArgument("BearingSensorParams: need one reported block or one per agent");
  }
  for (const auto& block : reported_cov) {
    if (block.rows() != kAgentStateDim || block.cols() != kAgentStateDim ||
        Eigen::LLT<Matrix<double>>(block).info() != Eigen::Success) {
      throw InvalidArgument("BearingSensorParams: reported blocks must be 9x9 SPD");
    }
  }
}

Matrix<double> BearingSensorParams::reported_block(int agent) const {
  return reported_cov.size() == 1 ? reported_cov.front()
                                  : reported_cov[static_cast<std::size_t>(agent)];
}

// Singer model per axis, beta = 1/tau, x = beta dt, rho = e^{-x}:
//
//   F = [1  dt  (x - 1 + rho) / beta^2]
//       [0   1  (1 - rho) / beta      ]
//       [0   0   rho                  ]
//
//   Q = 2 beta sigma_m^2 [q_ij], with
//   q11 = (1 - e^{-2x} + 2x + 2x^3/3 - 2x^2 - 4x rho) / (2 beta^5)
//   q12 = (e^{-2x} + 1 - 2 rho + 2x rho - 2x + x^2)  / (2 beta^4)
//   q13 = (1 - e^{-2x} - 2x rho)                     / (2 beta^3)
//   q22 = (4 rho - 3 - e^{-2x} + 2x)                 / (2 beta^3)
//   q23 = (e^{-2x} + 1 - 2 rho)                      / (2 beta^2)
//   q33 = (1 - e^{-2x})                              / (2 beta)
LinearFlow singer_axis(double dt, double tau, double maneuver_variance) {
  SingerParams{dt, tau, maneuver_variance, 1}.validate();
  const double beta = 1.0 / tau;
  const double x = beta * dt;

  static const ExpCombo f13{{-1, 1, 0, 0}, 1, 0, 0, 2};
  static const ExpCombo f23{{1, 0, 0, 0}, -1, 0, 0, 1};
  static const ExpCombo b11{{1, 2, -2, 2.0 / 3.0}, 0, -4, -1, 5};
  static const ExpCombo b12{{1, -2, 1, 0}, -2, 2, 1, 4};
  static const ExpCombo b13{{1, 0, 0, 0}, 0, -2, -1, 3};
  static const ExpCombo b22{{-3, 2, 0, 0}, 4, 0, -1, 3};
  static const ExpCombo b23{{1, 0, 0, 0}, -2, 0, 1, 2};
  static const ExpCombo b33{{1, 0, 0, 0}, 0, 0, -1, 1};

  LinearFlow axis;
  axis.transition.setIdentity(3, 3);
  axis.transition(0, 1) = dt;
  axis.transition(0, 2) = f13(x) / (beta * beta);
  axis.transition(1, 2) = f23(x) / beta;
  axis.transition(2, 2) = std::exp(-x);

  // 2 beta s^2 * B / (2 beta^n) = s^2 B / beta^(n-1)
  const double s2 = maneuver_variance;
  Matrix<double>& q = axis.noise;
  q.resize(3, 3);
  q(0, 0) = s2 * b11(x) / std::pow(beta, 4);
  q(0, 1) = s2 * b12(x) / std::pow(beta, 3);
  q(0, 2) = s2 * b13(x) / (beta * beta);
  q(1, 1) = s2 * b22(x) / (beta * beta);
  q(1, 2) = s2 * b23(x) / beta;
  q(2, 2) = s2 * b33(x);
  q(1, 0) = q(0, 1);
  q(2, 0) = q(0, 2);
  q(2, 1) = q(1, 2);
  return axis;
}

namespace {

// (I_agents (x) (axis (x) I_3)) for the [p, v, a] agent layout.
Matrix<double> expand(const Matrix<double>& axis, int agents) {
  const Index n = static_cast<Index>(agents) * kAgentStateDim;
  Matrix<double> out = Matrix<double>::Zero(n, n);
  for (int agent = 0; agent < agents; ++agent) {
    const Index base = static_cast<Index>(agent) * kAgentStateDim;
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j)
        for (Index d = 0; d < 3; ++d) out(base + 3 * i + d, base + 3 * j + d) = axis(i, j);
  }
  return out;
}

}  // namespace

LinearFlow singer_model(const SingerParams& params) {
  params.validate();
  const LinearFlow axis = singer_axis(params.dt, params.tau, params.maneuver_variance);
  return {expand(axis.transition, params.agents), expand(axis.noise, params.agents)};
}

Eigen::Vector2d bearing(const Eigen::Vector3d& p) {
  if (p.norm() < 1e-9) throw SingularGeometry("bearing: agent is at the base station");
  const double horizontal = std::hypot(p.x(), p.y());
  // atan2(0, 0) is 0, so the azimuth at the zenith is 0 by convention.
  return {std::atan2(p.y(), p.x()), std::atan2(horizontal, p.z())};
}

Permutation position_permutation(int agents) {
  if (agents < 1) throw InvalidArgument("position_permutation: agents must be >= 1");
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(agents) * kAgentStateDim);
  for (int i = 0; i < agents; ++i)
    for (Index d = 0; d < 3; ++d) order.push_back(i * kAgentStateDim + d);
  for (int i = 0; i < agents; ++i)
    for (Index d = 3; d < kAgentStateDim; ++d) order.push_back(i * kAgentStateDim + d);
  return Permutation(std::move(order));
}

StructuredMap<double> linear_structured_map(const Matrix<double>& transition) {
  const Index n = transition.rows();
  if (n < 1 || transition.cols() < 1) {
    throw InvalidArgument("linear_structured_map: empty transition");
  }
  PartiallyLinearFunction<double> map(
      1, 1, [](const Vector<double>&) { return Vector<double>::Zero(1).eval(); },
      transition.bottomRows(n - 1), Matrix<double>(transition.topRows(1)));
  return {std::move(map), Permutation::identity(transition.cols())};
}

Matrix<double> fusion_measurement_noise(const SingerParams& singer,
                                        const BearingSensorParams& sensor) {
  const int n = singer.agents;
  const Index x = static_cast<Index>(n) * kAgentStateDim;
  Matrix<double> r = Matrix<double>::Zero(2 * n + x, 2 * n + x);
  r.topLeftCorner(2 * n, 2 * n).diagonal().setConstant(sensor.sigma_alpha * sensor.sigma_alpha);
  for (int i = 0; i < n; ++i) {
    const Index at = 2 * n + static_cast<Index>(i) * kAgentStateDim;
    r.block(at, at, kAgentStateDim, kAgentStateDim) = sensor.reported_block(i);
  }
  return r;
}

EstimationModel<double> fusion_model(const SingerParams& singer, const BearingSensorParams& sensor,
                                     const RuleSpec& flow_rule, const RuleSpec& measurement_rule) {
  singer.validate();
  sensor.validate(singer.agents);
  const int n = singer.agents;
  const Index x = static_cast<Index>(n) * kAgentStateDim;

  const LinearFlow flow = singer_model(singer);

  // In permuted coordinates xb = T_H x the transmitted-state block is
  // x = T_H^{-1} xb, so row r of the linear map selects xb(inv[r]).
  const Permutation th = position_permutation(n);
  const Permutation inv = th.inverse();
  Matrix<double> select = Matrix<double>::Zero(x, x);
  for (Index r = 0; r < x; ++r) select(r, inv[r]) = 1.0;

  auto bearings = [n](const Vector<double>& positions) {
    Vector<double> out(2 * n);
    for (int i = 0; i < n; ++i) {
      out.segment<2>(2 * i) = bearing(positions.segment<3>(3 * i));
    }
    return out;
  };
  StructuredMap<double> measurement{
      PartiallyLinearFunction<double>(3 * n, 2 * n, bearings, std::move(select)), th};

  return EstimationModel<double>(linear_structured_map(flow.transition), flow.noise,
                                 std::move(measurement), fusion_measurement_noise(singer, sensor),
                                 flow_rule, measurement_rule);
}

Vector<double> benchmark_nonlinearity(const Vector<double>& z) {
  return z + Vector<double>::Constant(z.size(), z.squaredNorm());
}

PartiallyLinearFunction<double> benchmark_function(Index z_dim, Index l_dim, std::uint64_t seed) {
  if (z_dim < 1 || l_dim < 1) throw InvalidArgument("benchmark_function: Z and L must be >= 1");
  Rng rng(seed);
  return PartiallyLinearFunction<double>(z_dim, z_dim, benchmark_nonlinearity,
                                         rng.normal_matrix(l_dim, z_dim + l_dim));
}

}  // namespace plkf::models
