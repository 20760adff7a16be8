#include "tenar/forecast.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace tenar {

DetrendResult detrend_exp_smooth(const TensorSeries& s, double alpha) {
  s.validate();
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw InvalidInput("detrend_exp_smooth: alpha must lie in (0, 1)");
  if (s.length() < 1) throw InvalidInput("detrend_exp_smooth: empty series");
  DetrendResult out;
  out.trend.dims = s.dims;
  out.resid.dims = s.dims;
  out.trend.obs.reserve(s.obs.size());
  out.resid.obs.reserve(s.obs.size());
  Vector level = s.obs[0].vec();
  for (Index t = 0; t < s.length(); ++t) {
    if (t > 0)
      level = alpha * s.obs[static_cast<std::size_t>(t)].vec() +
              (1.0 - alpha) * level;
    out.trend.obs.emplace_back(s.dims, level);
    out.resid.obs.emplace_back(
        s.dims, Vector(s.obs[static_cast<std::size_t>(t)].vec() - level));
  }
  return out;
}

namespace {

TensorSeries prefix_of(const TensorSeries& s, Index len) {
  TensorSeries p;
  p.dims = s.dims;
  p.obs.assign(s.obs.begin(), s.obs.begin() + len);
  return p;
}

Vector expanding_mean(const TensorSeries& s, Index upto) {
  Vector m = Vector::Zero(product(s.dims));
  for (Index t = 0; t < upto; ++t) m += s.obs[static_cast<std::size_t>(t)].vec();
  return m / static_cast<double>(upto);
}

// Per-cell scalar AR(p) coefficients fitted by least squares on the
// prefix [0, len); row e holds the lag coefficients of cell e.
Matrix entrywise_ar(const TensorSeries& s, Index len, Index p) {
  const Index d = product(s.dims);
  Matrix coef = Matrix::Zero(d, p);
  Matrix gram(p, p);
  Vector rhs(p), z(p);
  for (Index e = 0; e < d; ++e) {
    gram.setZero();
    rhs.setZero();
    for (Index t = p; t < len; ++t) {
      for (Index i = 0; i < p; ++i)
        z[i] = s.obs[static_cast<std::size_t>(t - 1 - i)].vec()[e];
      gram.noalias() += z * z.transpose();
      rhs.noalias() += s.obs[static_cast<std::size_t>(t)].vec()[e] * z;
    }
    Matrix g = gram;
    Eigen::LDLT<Matrix> ldlt(g);
    Vector sol = ldlt.solve(rhs);
    if ((g * sol - rhs).cwiseAbs().maxCoeff() >
        1e-6 * std::max(rhs.cwiseAbs().maxCoeff(), 1e-300)) {
      g.diagonal().array() += 1e-8 * std::max(gram.trace() / p, 1e-300);
      sol = g.ldlt().solve(rhs);
    }
    coef.row(e) = sol.transpose();
  }
  return coef;
}

struct MethodState {
  std::string name;
  bool needs_fit = false;
  bool uses_detrend = false;  // autoregressive methods follow the split
  // One of these is active depending on the method.
  std::optional<TenArModel> tenar;
  std::vector<Matrix> var_phi;
  Matrix iar_coef;
  bool fit_ok = false;
};

}  // namespace

ForecastReport rolling_eval(const TensorSeries& s,
                            const std::optional<ModelSpec>& spec,
                            EstimatorKind estimator, const FitOptions& fit,
                            const EvalConfig& cfg) {
  s.validate();
  const Index T = s.length();
  const Index d = product(s.dims);
  Index p = spec ? spec->order() : 1;
  if (spec) {
    spec->validate();
    if (spec->dims != s.dims)
      throw InvalidInput("rolling_eval: spec dims do not match series");
  }
  if (cfg.t0 <= p || cfg.t0 > T)
    throw InvalidInput("rolling_eval: first predicted index must satisfy p < t0 <= T");
  if (cfg.refit_every < 0)
    throw InvalidInput("rolling_eval: refit cadence must be nonnegative");
  if (cfg.detrend_alpha &&
      (!(*cfg.detrend_alpha > 0.0) || !(*cfg.detrend_alpha < 1.0)))
    throw InvalidInput("rolling_eval: smoothing alpha must lie in (0, 1)");
  for (BaselineMethod b : cfg.baselines)
    if (b == BaselineMethod::Smoother && !cfg.detrend_alpha)
      throw InvalidInput("rolling_eval: trend predictor requires detrend_alpha");

  const bool detrend = cfg.detrend_alpha.has_value();
  DetrendResult split;
  if (detrend) split = detrend_exp_smooth(s, *cfg.detrend_alpha);
  const TensorSeries& fit_on = detrend ? split.resid : s;

  std::vector<MethodState> methods;
  if (spec) {
    MethodState m;
    m.name = estimator == EstimatorKind::MaximumLikelihood ? "tenar-mle"
                                                           : "tenar-lse";
    m.needs_fit = true;
    m.uses_detrend = true;
    methods.push_back(std::move(m));
  }
  for (BaselineMethod b : cfg.baselines) {
    MethodState m;
    switch (b) {
      case BaselineMethod::EntrywiseAr:
        m.name = "iar";
        m.needs_fit = true;
        m.uses_detrend = true;
        break;
      case BaselineMethod::Var:
        m.name = "var";
        m.needs_fit = true;
        m.uses_detrend = true;
        break;
      case BaselineMethod::Mean:
        m.name = "mean";
        break;
      case BaselineMethod::RandomWalk:
        m.name = "rw";
        break;
      case BaselineMethod::Smoother:
        m.name = "es";
        break;
    }
    methods.push_back(std::move(m));
  }
  if (methods.empty())
    throw InvalidInput("rolling_eval: no methods requested");

  ForecastReport report;
  report.t0 = cfg.t0;
  report.origin_count = T - cfg.t0 + 1;
  for (const MethodState& m : methods)
    report.methods.push_back({m.name, 0.0, {}, 0});

  Index origin_no = 0;
  for (Index j = cfg.t0 - 1; j < T; ++j, ++origin_no) {
    // j is the 0-based predicted index; fits may use obs[0..j-1].
    const bool refit_now =
        origin_no == 0 ||
        (cfg.refit_every > 0 && origin_no % cfg.refit_every == 0);
    const Vector mean_fallback = expanding_mean(s, j);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      MethodState& m = methods[mi];
      if (m.needs_fit && refit_now) {
        m.fit_ok = false;
        try {
          if (m.name == "var") {
            m.var_phi = var_ols(prefix_of(fit_on, j), p).phi;
          } else if (m.name == "iar") {
            m.iar_coef = entrywise_ar(fit_on, j, p);
          } else {
            FitOptions opts = fit;
            const TensorSeries pre = prefix_of(fit_on, j);
            m.tenar = estimator == EstimatorKind::MaximumLikelihood
                          ? fit_mle(pre, *spec, opts).model
                          : fit_lse(pre, *spec, opts).model;
          }
          m.fit_ok = true;
        } catch (const std::exception&) {
          m.fit_ok = false;
        }
      }

      Vector pred(d);
      bool fallback = false;
      if (m.name == "mean") {
        pred = mean_fallback;
      } else if (m.name == "rw") {
        pred = s.obs[static_cast<std::size_t>(j - 1)].vec();
      } else if (m.name == "es") {
        pred = split.trend.obs[static_cast<std::size_t>(j - 1)].vec();
      } else if (!m.fit_ok) {
        pred = mean_fallback;
        fallback = true;
      } else {
        const TensorSeries& src = m.uses_detrend ? fit_on : s;
        if (m.name == "var") {
          pred.setZero();
          for (Index i = 0; i < p; ++i)
            pred.noalias() += m.var_phi[static_cast<std::size_t>(i)] *
                              src.obs[static_cast<std::size_t>(j - 1 - i)].vec();
        } else if (m.name == "iar") {
          pred.setZero();
          for (Index i = 0; i < p; ++i)
            pred += m.iar_coef.col(i).cwiseProduct(
                src.obs[static_cast<std::size_t>(j - 1 - i)].vec());
        } else {
          std::vector<DenseTensor> win;
          win.reserve(static_cast<std::size_t>(p));
          for (Index i = 0; i < p; ++i)
            win.push_back(src.obs[static_cast<std::size_t>(j - 1 - i)]);
          pred = predict_one(*m.tenar, win).vec();
        }
        if (detrend)
          pred += split.trend.obs[static_cast<std::size_t>(j - 1)].vec();
      }
      if (fallback) ++report.methods[mi].failed_origins;
      const double err2 =
          (pred - s.obs[static_cast<std::size_t>(j)].vec()).squaredNorm();
      report.methods[mi].step_sq_err.push_back(err2);
      report.methods[mi].mse += err2;
    }
    report.total += s.obs[static_cast<std::size_t>(j)].vec().squaredNorm();
  }

  const double denom =
      static_cast<double>(d) * static_cast<double>(report.origin_count);
  for (MethodResult& mr : report.methods) mr.mse /= denom;
  report.total /= denom;
  return report;
}

}  // namespace tenar
