#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenar {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Mode extents d_1, ..., d_K of a tensor, slowest-growing index last.
using Dims = std::vector<Index>;

/// Thrown when an argument violates a documented precondition
/// (dimension mismatch, bad rank, malformed file, ...).  The CLI maps
/// this to exit code 1.
class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a computation fails numerically (singular system,
/// non-convergent iteration, diverging objective).  The CLI maps this
/// to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline Index product(const Dims& dims) {
  Index p = 1;
  for (Index d : dims) p *= d;
  return p;
}

}  // namespace tenar
