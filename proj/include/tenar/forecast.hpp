#pragma once

#include <optional>
#include <string>

#include "tenar/estimators.hpp"
#include "tenar/inference.hpp"
#include "tenar/series.hpp"
#include "tenar/simulate.hpp"

namespace tenar {

struct DetrendResult {
  TensorSeries trend;
  TensorSeries resid;
};

/// Exponential smoothing split: trend[0] = obs[0], then
/// trend[t] = alpha*obs[t] + (1-alpha)*trend[t-1]; resid = obs - trend.
/// trend + resid reconstructs the input up to floating point roundoff.
/// The conventional default when smoothing is requested without a
/// value is kDefaultSmoothingAlpha (a 63-period window).
DetrendResult detrend_exp_smooth(const TensorSeries& s, double alpha);

inline constexpr double kDefaultSmoothingAlpha = 2.0 / (63.0 + 1.0);

/// Reference predictors evaluated alongside the model:
///  - EntrywiseAr: independent scalar AR(p) per tensor cell.
///  - Var: unrestricted vector autoregression of the same order.
///  - Mean: expanding mean of the raw series.
///  - RandomWalk: repeats the last raw observation.
///  - Smoother: predicts the current smoothed trend (requires
///    detrend_alpha).
enum class BaselineMethod { EntrywiseAr, Var, Mean, RandomWalk, Smoother };

struct EvalConfig {
  /// 1-based index of the first predicted observation; must exceed the
  /// model order and be at most the series length.
  Index t0 = 0;
  /// Refit cadence in origins; 0 fits once at the first origin.
  int refit_every = 1;
  std::vector<BaselineMethod> baselines;
  /// When set, autoregressive methods fit the detrended residuals and
  /// forecasts recombine with the trend; Mean and RandomWalk always
  /// operate on the raw series.
  std::optional<double> detrend_alpha;
};

struct MethodResult {
  std::string name;
  double mse = 0.0;
  /// Squared Frobenius error at each predicted index.
  std::vector<double> step_sq_err;
  /// Origins where fitting failed and the expanding-mean fallback was
  /// used instead.
  int failed_origins = 0;
};

struct ForecastReport {
  std::vector<MethodResult> methods;
  /// Average squared Frobenius norm of the predicted observations,
  /// identical for every method.
  double total = 0.0;
  Index t0 = 0;
  Index origin_count = 0;
};

/// Rolling one-step-ahead evaluation: at each origin the methods are
/// fitted (per refit_every) on data strictly before the predicted
/// index, and squared Frobenius errors accumulate into per-method
/// MSE = sum of errors / (d * number of predictions).  When `spec` is
/// set, the model method named "tenar-lse" or "tenar-mle" runs first;
/// baselines follow in the order given.
ForecastReport rolling_eval(const TensorSeries& s,
                            const std::optional<ModelSpec>& spec,
                            EstimatorKind estimator, const FitOptions& fit,
                            const EvalConfig& cfg);

}  // namespace tenar
