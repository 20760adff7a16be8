#pragma once

#include "tenar/estimators.hpp"
#include "tenar/series.hpp"

namespace tenar {

/// Penalty weight per multilinear term.
///  - PerTerm: log(n)/n for every term.
///  - PerParameter: (sum_k d_k^2 - K + 1) * log(n) / (d * n), scaling
///    the charge by the free parameter count of one term.
enum class Penalty { PerTerm, PerParameter };

/// The g(d, n) factor multiplying the total term count in the
/// criterion.
double penalty_weight(Penalty pen, Index d, Index n, const Dims& dims);

/// Information criterion value for one candidate configuration:
/// 0.5 * log(SSE / (d * n)) + penalty_weight * (number of terms),
/// where n is the number of fitted equations (series length minus the
/// configuration's trimmed order).  Fits by least squares from a
/// projection start; the all-zero configuration scores the raw sum of
/// squares with no fit.
double ic_value(const TensorSeries& s, const std::vector<int>& kranks,
                Penalty pen, const FitOptions& opts = {});

struct SelectionCell {
  std::vector<int> kranks;
  double ic = 0.0;
  double sse = 0.0;
  int sweeps = 0;
  // True when the fit produced a usable objective value.  A fit that
  // exhausts the sweep cap still counts (see sweeps); only a fit that
  // fails outright leaves the cell non-convergent with a NaN ic.
  bool converged = false;
};

struct SelectionReport {
  std::vector<SelectionCell> cells;
  std::vector<int> chosen;  // trailing zeros trimmed; empty = white noise
  Index chosen_order = 0;
  Penalty penalty = Penalty::PerTerm;
};

/// Exhaustive search over rank configurations with order up to p_max
/// and per-lag rank up to r_max (trailing zeros trimmed away, so each
/// candidate appears once).  Every cell is fitted by least squares on
/// the common window starting at p_max, so criteria are comparable.
/// Cells whose fit fails stay in the report but are excluded from the
/// minimum.
SelectionReport select_joint(const TensorSeries& s, int p_max, int r_max,
                             Penalty pen, const FitOptions& opts = {});

/// Separate per-lag search: lag i's rank varies over 0..r_max while
/// all other lags stay at r_max; the per-lag minimizers combine into
/// the chosen configuration, and the order is the last lag with a
/// positive chosen rank.
SelectionReport select_separate(const TensorSeries& s, int p_max, int r_max,
                                Penalty pen, const FitOptions& opts = {});

}  // namespace tenar
