#pragma once

#include "tenar/types.hpp"

namespace tenar {

struct SpectralRadius {
  double value = 0.0;
  bool converged = false;
};

/// Largest eigenvalue modulus of a square real matrix.  Uses a dense
/// eigensolver up to 512x512; beyond that restarted Arnoldi iteration
/// with the Ritz residual as the convergence certificate.  `converged`
/// is false only when the iterative path fails to settle within the
/// relative tolerance.
SpectralRadius spectral_radius(const Matrix& m, double tol = 1e-8);

}  // namespace tenar
