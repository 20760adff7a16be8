#pragma once

#include "tenar/estimators.hpp"
#include "tenar/model.hpp"
#include "tenar/series.hpp"

namespace tenar {

/// Standard normal quantile (inverse CDF) via the Acklam rational
/// approximation, absolute accuracy around 1e-9 over (0, 1).
double normal_quantile(double p);

/// Gradient carrier of the one-step prediction with respect to the
/// stacked free parameters, evaluated at one time point.  Row blocks
/// run over lags (outer), terms within lag, then modes (inner); the
/// block for mode k of term (i, r) is
///   ((lag-i unfolding times the other modes' Kronecker chain) ⊗ I) Q_k,
/// giving d_k^2 rows.  Columns span the d vectorized entries of the
/// prediction, so block k transposed is the Jacobian of vec(prediction)
/// in vec(A_k^{(ir)}).
/// window[0] is the lag-1 observation, window[i] the lag-(i+1) one.
Matrix build_w(const TenArModel& m, std::span<const DenseTensor> window);

/// Total stacked parameter count: sum over lags of R_i * sum_k d_k^2.
Index stacked_param_count(const ModelSpec& spec);

/// Stacked parameter vector (vectorized factors in build_w block
/// order) of a model.
Vector stacked_params(const TenArModel& m);

enum class EstimatorKind { LeastSquares, MaximumLikelihood };

struct AsymptoticInference {
  /// Asymptotic covariance of sqrt(n) times the estimation error of
  /// the stacked parameters, with the identification constraints
  /// handled through the augmented curvature term.
  Matrix xi;
  /// Per-parameter standard errors sqrt(xi_jj / n_eff).
  Vector se;
  Index n_eff = 0;
  EstimatorKind kind = EstimatorKind::LeastSquares;
};

/// Sandwich (least squares) or inverse-information (maximum
/// likelihood) covariance of the fitted coefficients.  The model
/// should be the fit produced on this series; the least-squares
/// variant uses the sample residual covariance, while the likelihood
/// variant requires separable noise and uses its fitted covariance.
AsymptoticInference asymp_cov(const TensorSeries& s, const TenArModel& m,
                              EstimatorKind kind, Index t_start = -1);

struct ConfInterval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double se = 0.0;
};

/// Entrywise two-sided intervals at the given coverage level for the
/// stacked parameters.
std::vector<ConfInterval> conf_intervals(const TenArModel& m,
                                         const AsymptoticInference& inf,
                                         double level);

}  // namespace tenar
