#pragma once

// Estimation models for the benchmark and tracking experiments: a random
// partially linear test function, per-agent Singer dynamics, bearing
// measurements from a base station at the origin, and the fused base-station
// model combining bearings with the agents' transmitted estimates.

#include <cstdint>
#include <vector>

#include "plkf/filter.hpp"
#include "plkf/linalg.hpp"
#include "plkf/moments.hpp"
#include "plkf/types.hpp"

namespace plkf::models {

struct SingerParams {
  double dt = 0.1;                 // s
  double tau = 2.0;                // maneuver time constant, s
  double maneuver_variance = 1.0;  // sigma_m^2, (m/s^2)^2
  int agents = 1;

  void validate() const;
};

struct BearingSensorParams {
  double sigma_alpha = 0.01;  // rad
  // Reported 9x9 covariance of each agent's own estimate; one block is reused
  // for all agents when only one is given.
  std::vector<Matrix<double>> reported_cov{Matrix<double>::Identity(9, 9) * 0.1};

  void validate(int agents) const;
  Matrix<double> reported_block(int agent) const;
};

struct LinearFlow {
  Matrix<double> transition;
  Matrix<double> noise;
};

inline constexpr int kAgentStateDim = 9;

/// Per-axis Singer transition and process noise for [position, velocity,
/// acceleration].
LinearFlow singer_axis(double dt, double tau, double maneuver_variance);

/// Full multi-agent model, agent state [p(3), v(3), a(3)], blocks I_N (x) A^i.
LinearFlow singer_model(const SingerParams& params);

/// (azimuth, inclination) of p as seen from the origin.
Eigen::Vector2d bearing(const Eigen::Vector3d& p);

/// Gathers every agent's position to the front: (p1 v1 a1 p2 v2 a2 ...) ->
/// (p1 p2 ... v1 a1 v2 a2 ...).
Permutation position_permutation(int agents);

/// Fully linear map x -> B x in additive form: z = x(0), g = 0 (one output),
/// y = [B.row(0) x + g(z); B.bottomRows x].
StructuredMap<double> linear_structured_map(const Matrix<double>& transition);

/// Base-station model: Singer flow, measurement [bearings of all agents; x].
EstimationModel<double> fusion_model(const SingerParams& singer, const BearingSensorParams& sensor,
                                     const RuleSpec& flow_rule = {},
                                     const RuleSpec& measurement_rule = {});

Matrix<double> fusion_measurement_noise(const SingerParams& singer,
                                        const BearingSensorParams& sensor);

/// y = [g(z); A x] with g(z) = z + |z|^2 1_Z and A an L x (Z + L) standard
/// normal matrix drawn from Rng(seed).
PartiallyLinearFunction<double> benchmark_function(Index z_dim, Index l_dim, std::uint64_t seed);

Vector<double> benchmark_nonlinearity(const Vector<double>& z);

}  // namespace plkf::models
