#include "tenar/selection.hpp"

#include <cmath>
#include <limits>

namespace tenar {

double penalty_weight(Penalty pen, Index d, Index n, const Dims& dims) {
  if (n < 1) throw InvalidInput("penalty_weight: no observations");
  const double logn = std::log(static_cast<double>(n));
  switch (pen) {
    case Penalty::PerTerm:
      return logn / static_cast<double>(n);
    case Penalty::PerParameter: {
      Index sq = 0;
      for (Index dk : dims) sq += dk * dk;
      const double free_params =
          static_cast<double>(sq) - static_cast<double>(dims.size()) + 1.0;
      return free_params * logn /
             (static_cast<double>(d) * static_cast<double>(n));
    }
  }
  throw InvalidInput("unknown penalty kind");
}

namespace {

double score(double sse, Index d, Index n, int total_terms, Penalty pen,
             const Dims& dims) {
  if (!(sse > 0.0))
    throw InvalidInput("information criterion: sum of squares must be positive");
  return 0.5 * std::log(sse /
                        (static_cast<double>(d) * static_cast<double>(n))) +
         penalty_weight(pen, d, n, dims) * total_terms;
}

double raw_sse(const TensorSeries& s, Index t0) {
  double sse = 0.0;
  for (Index t = t0; t < s.length(); ++t)
    sse += s.obs[static_cast<std::size_t>(t)].vec().squaredNorm();
  return sse;
}

// Fits one candidate configuration on the common window and scores it.
// Fit failures become non-convergent cells rather than aborting the
// whole search.
SelectionCell eval_cell(const TensorSeries& s, std::vector<int> kranks,
                        Index t0, Penalty pen, const FitOptions& base,
                        std::uint64_t cell_id) {
  SelectionCell cell;
  cell.kranks = std::move(kranks);
  const Index d = product(s.dims);
  const Index n = s.length() - t0;
  int total = 0;
  for (int r : cell.kranks) total += r;
  if (total == 0) {
    cell.sse = raw_sse(s, t0);
    cell.converged = true;
    cell.ic = score(cell.sse, d, n, 0, pen, s.dims);
    return cell;
  }
  ModelSpec spec;
  spec.dims = s.dims;
  spec.kranks = cell.kranks;
  FitOptions opts = base;
  opts.t_start = t0;
  opts.seed = base.seed ^ (0x9E3779B97F4A7C15ull * (cell_id + 1));
  try {
    const FitReport fit = fit_lse(s, spec, opts);
    cell.sse = fit.sse;
    cell.sweeps = fit.sweeps;
    // A fit that stops at the sweep cap still delivers a valid
    // objective, so the cell stays scoreable; only an outright fit
    // failure removes it from the argmin.  Overparameterized cells
    // often crawl below the sweep tolerance without ever settling,
    // and dropping them would abort the whole per-lag search.
    cell.converged = true;
    cell.ic = score(cell.sse, d, n, total, pen, s.dims);
  } catch (const NumericalError&) {
    cell.converged = false;
    cell.ic = std::numeric_limits<double>::quiet_NaN();
    cell.sse = std::numeric_limits<double>::quiet_NaN();
  }
  return cell;
}

std::vector<int> trimmed(std::vector<int> kranks) {
  while (!kranks.empty() && kranks.back() == 0) kranks.pop_back();
  return kranks;
}

}  // namespace

double ic_value(const TensorSeries& s, const std::vector<int>& kranks,
                Penalty pen, const FitOptions& opts) {
  s.validate();
  for (int r : kranks)
    if (r < 0) throw InvalidInput("ic_value: ranks must be nonnegative");
  const std::vector<int> eff = trimmed(kranks);
  const Index t0 = static_cast<Index>(eff.size());
  if (s.length() - t0 < 1) throw InvalidInput("ic_value: series too short");
  const SelectionCell cell = eval_cell(s, eff, t0, pen, opts, 0);
  if (!cell.converged && std::isnan(cell.ic))
    throw NumericalError("ic_value: fit failed for this configuration");
  return cell.ic;
}

SelectionReport select_joint(const TensorSeries& s, int p_max, int r_max,
                             Penalty pen, const FitOptions& opts) {
  s.validate();
  if (p_max < 1 || r_max < 1)
    throw InvalidInput("select_joint: caps must be positive");
  const Index t0 = p_max;
  if (s.length() - t0 < 1)
    throw InvalidInput("select_joint: series too short for the order cap");

  // Enumerate configurations of every order up to p_max with a
  // positive final rank (so no candidate is listed twice), plus the
  // empty white-noise configuration.
  std::vector<std::vector<int>> configs;
  configs.push_back({});
  std::vector<int> cur;
  for (int p = 1; p <= p_max; ++p) {
    cur.assign(static_cast<std::size_t>(p), 0);
    cur.back() = 1;
    while (true) {
      configs.push_back(cur);
      // Odometer increment keeping the last entry >= 1.
      int pos = 0;
      while (pos < p) {
        if (cur[static_cast<std::size_t>(pos)] < r_max) {
          ++cur[static_cast<std::size_t>(pos)];
          break;
        }
        cur[static_cast<std::size_t>(pos)] = pos == p - 1 ? 1 : 0;
        ++pos;
      }
      if (pos == p) break;
    }
  }

  SelectionReport report;
  report.penalty = pen;
  std::size_t best = configs.size();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    report.cells.push_back(eval_cell(s, configs[c], t0, pen, opts, c));
    const SelectionCell& cell = report.cells.back();
    if (cell.converged &&
        (best == configs.size() || cell.ic < report.cells[best].ic))
      best = c;
  }
  if (best == configs.size())
    throw NumericalError("model selection: no candidate configuration converged");
  report.chosen = trimmed(report.cells[best].kranks);
  report.chosen_order = static_cast<Index>(report.chosen.size());
  return report;
}

SelectionReport select_separate(const TensorSeries& s, int p_max, int r_max,
                                Penalty pen, const FitOptions& opts) {
  s.validate();
  if (p_max < 1 || r_max < 1)
    throw InvalidInput("select_separate: caps must be positive");
  const Index t0 = p_max;
  if (s.length() - t0 < 1)
    throw InvalidInput("select_separate: series too short for the order cap");

  SelectionReport report;
  report.penalty = pen;
  std::vector<int> chosen(static_cast<std::size_t>(p_max), 0);
  std::uint64_t cell_id = 0;
  for (int i = 0; i < p_max; ++i) {
    int best_rank = -1;
    double best_ic = 0.0;
    for (int ri = 0; ri <= r_max; ++ri) {
      std::vector<int> kranks(static_cast<std::size_t>(p_max), r_max);
      kranks[static_cast<std::size_t>(i)] = ri;
      report.cells.push_back(
          eval_cell(s, std::move(kranks), t0, pen, opts, cell_id++));
      const SelectionCell& cell = report.cells.back();
      if (cell.converged && (best_rank < 0 || cell.ic < best_ic)) {
        best_rank = ri;
        best_ic = cell.ic;
      }
    }
    if (best_rank < 0)
      throw NumericalError("model selection: no candidate configuration converged");
    chosen[static_cast<std::size_t>(i)] = best_rank;
  }
  report.chosen = trimmed(chosen);
  report.chosen_order = static_cast<Index>(report.chosen.size());
  return report;
}

}  // namespace tenar
