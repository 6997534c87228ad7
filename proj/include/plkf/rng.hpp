#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "plkf/types.hpp"

namespace plkf {

/// Reproducible generator: std::mt19937_64 (output sequence fixed by the
/// standard) with uniforms built from the top 53 bits and normals from the
/// Marsaglia polar method. Does not rely on <random> distributions, whose
/// algorithms are implementation-defined.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64+u53+marsaglia-polar";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // splitmix64 finalizer over (seed, stream); used to give every trial its
  // own sub-stream independent of execution order.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  Vector<double> normal_vector(Index n) {
    Vector<double> v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  // Column-major fill.
  Matrix<double> normal_matrix(Index rows, Index cols) {
    Matrix<double> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace plkf
