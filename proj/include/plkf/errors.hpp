#pragma once

#include <stdexcept>
#include <string>

#include "plkf/types.hpp"

namespace plkf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown, e.g. an iterative solve that failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ResourceLimit : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(Index pivot)
      : Error("matrix is not positive definite (pivot " + std::to_string(pivot) + ")"),
        pivot_(pivot) {}

  // Zero-based column index of the first non-positive pivot.
  Index pivot() const { return pivot_; }

 private:
  Index pivot_;
};

// Innovation covariance of a measurement update is not positive definite.
class InnovationDegenerate : public Error {
 public:
  using Error::Error;
};

class SingularGeometry : public Error {
 public:
  using Error::Error;
};

}  // namespace plkf
