#pragma once

#include <optional>

#include "tenar/model.hpp"
#include "tenar/series.hpp"
#include "tenar/types.hpp"

namespace tenar {

enum class InitKind { Projection, Provided, Scalar };

struct FitOptions {
  int max_sweeps = 200;
  double rel_tol = 1e-8;
  /// Ridge added to block Gram matrices.  Negative means automatic:
  /// 1e-10 times the mean diagonal of the Gram.  Zero disables.
  double ridge = -1.0;
  InitKind init = InitKind::Projection;
  /// Starting point when init == Provided.
  std::optional<TenArModel> init_model;
  /// Every factor starts as scalar_init * I when init == Scalar.
  double scalar_init = 0.5;
  /// Random restarts for the rank-R decomposition inside projection.
  int cp_restarts = 10;
  std::uint64_t seed = 0;
  /// First predicted time index (0-based).  Negative means the model
  /// order p.  Raising it shortens the fit window, which keeps
  /// objective values comparable across specs of different order.
  Index t_start = -1;
};

struct FitReport {
  TenArModel model;
  /// Entry 0 is the objective at the initial point, one entry per
  /// sweep after that.  Sum of squared errors for least squares,
  /// log-likelihood for maximum likelihood.
  std::vector<double> objective_trace;
  int sweeps = 0;
  bool converged = false;
  double sse = 0.0;
  Matrix residual_cov;
  Index n_eff = 0;
};

struct VarFit {
  std::vector<Matrix> phi;
  Matrix resid_cov;
  Index n_eff = 0;
};

/// Stacked ordinary least squares for the unrestricted vector
/// autoregression of order p.  resid_cov uses divisor n_eff = T - t0.
VarFit var_ols(const TensorSeries& s, Index p, double ridge = 0.0,
               Index t_start = -1);

struct CpComponent {
  double weight = 0.0;
  std::vector<Vector> factors;  // unit norm
};

struct CpResult {
  std::vector<CpComponent> components;
  double residual = 0.0;  // Frobenius norm of tensor minus reconstruction
  bool converged = false;
};

/// Rank-R decomposition of a tensor into a sum of R outer products.
/// Order 1: trivial; order 2: truncated singular value decomposition
/// (exact); order >= 3: alternating least squares from a higher-order
/// SVD start plus `restarts` random starts, best fit kept.
CpResult cp_rank_r(const DenseTensor& t, int rank, int restarts = 10,
                   std::uint64_t seed = 0);

/// Splits a covariance into per-mode factors by repeated rank-one
/// rearranged SVD: the leading pair of the rearrangement of sigma
/// against modes (k, rest) yields factor k and the remainder to
/// recurse on.  Each output factor is symmetrized and eigenvalue
/// clamped to be positive semidefinite, and the list follows the
/// separable scale convention.  Exactly separable inputs are recovered
/// up to that convention.
std::vector<Matrix> hier_svd_sep_cov(const Matrix& sigma, const Dims& dims);

/// Projection estimator: unrestricted VAR, then per lag a rank-R_i
/// decomposition of the rearranged coefficient, weights and signs
/// absorbed into the last mode.  Noise becomes Dense(residual
/// covariance), or its hierarchical separable split when
/// separable_noise is set.
TenArModel proj_estimator(const TensorSeries& s, const ModelSpec& spec,
                          std::uint64_t seed = 0, bool separable_noise = false,
                          int cp_restarts = 10, Index t_start = -1);

/// Gaussian log-likelihood of the series under the model, conditional
/// on the first t0 observations.  Requires separable noise.
double loglik(const TensorSeries& s, const TenArModel& m, Index t_start = -1);

/// Alternating least squares over coefficient factors.  Each block
/// update is the exact minimizer given the rest, so the objective
/// trace is non-increasing; an increase beyond 1e-10 relative aborts
/// with NumericalError.  The fitted noise is Dense(residual
/// covariance).
FitReport fit_lse(const TensorSeries& s, const ModelSpec& spec,
                  const FitOptions& opts = {});

/// Alternating maximum likelihood under separable noise: generalized
/// least squares updates for the factors interleaved with closed-form
/// covariance factor updates.  The log-likelihood trace is
/// non-decreasing; a decrease beyond 1e-10 relative aborts.
FitReport fit_mle(const TensorSeries& s, const ModelSpec& spec,
                  const FitOptions& opts = {});

}  // namespace tenar
