#include "tenar/cli.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tenar/estimators.hpp"
#include "tenar/forecast.hpp"
#include "tenar/inference.hpp"
#include "tenar/io.hpp"
#include "tenar/model.hpp"
#include "tenar/rng.hpp"
#include "tenar/selection.hpp"
#include "tenar/simulate.hpp"

namespace tenar {

namespace {

std::string joined_command(int argc, const char* const* argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

NoiseSetting setting_from(const std::string& s) {
  if (s == "I") return NoiseSetting::Identity;
  if (s == "II") return NoiseSetting::RandomDense;
  if (s == "III") return NoiseSetting::RandomSeparable;
  throw InvalidInput("unknown setting '" + s + "' (expected I, II or III)");
}

Penalty penalty_from(const std::string& s) {
  if (s == "ic1") return Penalty::PerTerm;
  if (s == "ic2") return Penalty::PerParameter;
  throw InvalidInput("unknown penalty '" + s + "' (expected ic1 or ic2)");
}

BaselineMethod baseline_from(const std::string& s) {
  if (s == "iar") return BaselineMethod::EntrywiseAr;
  if (s == "var") return BaselineMethod::Var;
  if (s == "mean") return BaselineMethod::Mean;
  if (s == "rw") return BaselineMethod::RandomWalk;
  if (s == "es") return BaselineMethod::Smoother;
  throw InvalidInput("unknown baseline '" + s +
                     "' (expected iar, var, mean, rw or es)");
}

std::vector<int> broadcast_kranks(std::vector<int> kranks, int p) {
  if (p < 1) throw InvalidInput("order p must be at least 1");
  if (kranks.size() == 1 && p > 1)
    kranks.assign(static_cast<std::size_t>(p), kranks[0]);
  if (static_cast<int>(kranks.size()) != p)
    throw InvalidInput("kranks must list one rank, or one rank per lag");
  return kranks;
}

double sse_over(const TensorSeries& s, const TenArModel& m) {
  const Index p = m.spec.order();
  std::vector<DenseTensor> window(static_cast<std::size_t>(p),
                                  DenseTensor(s.dims));
  double sse = 0.0;
  for (Index t = p; t < s.length(); ++t) {
    for (Index i = 0; i < p; ++i)
      window[static_cast<std::size_t>(i)] =
          s.obs[static_cast<std::size_t>(t - 1 - i)];
    sse += (s.obs[static_cast<std::size_t>(t)].vec() -
            predict_one(m, window).vec())
               .squaredNorm();
  }
  return sse;
}

struct SimulateArgs {
  Dims dims;
  int p = 1;
  std::vector<int> kranks;
  double rho = 0.8;
  Index T = 0;
  std::string setting = "I";
  std::uint64_t seed = 0;
  Index burn_in = 500;
  std::string out;
  std::string model_out;
};

void run_simulate(const SimulateArgs& a, const std::string& cmd) {
  ModelSpec spec{a.dims, broadcast_kranks(a.kranks, a.p)};
  spec.validate();
  if (a.T < 1) throw InvalidInput("T must be at least 1");
  if (!(a.rho > 0.0 && a.rho < 1.0))
    throw InvalidInput("rho must lie strictly between 0 and 1");
  Rng root(a.seed);
  const std::uint64_t model_seed = root.next_u64();
  const std::uint64_t noise_seed = root.next_u64();
  const std::uint64_t sim_seed = root.next_u64();
  TenArModel m = random_model(spec, a.rho, model_seed);
  m.noise = noise_cov(setting_from(a.setting), a.dims, noise_seed);
  const TensorSeries s = simulate_series(m, a.T, sim_seed, a.burn_in);
  write_series(a.out, s);
  write_meta_sidecar(a.out, cmd);
  const std::string model_path =
      a.model_out.empty() ? a.out + ".model.json" : a.model_out;
  write_model(model_path, m);
  write_meta_sidecar(model_path, cmd);
  std::cout << "simulate: wrote " << a.T << " observations to " << a.out
            << " and the generating model to " << model_path << "\n";
}

struct FitArgs {
  std::string in;
  std::vector<int> kranks;
  std::string estimator = "lse";
  std::string noise;  // empty = dense for proj/lse, separable for mle
  int max_sweeps = 200;
  double rel_tol = 1e-8;
  double ridge = -1.0;
  int cp_restarts = 10;
  std::uint64_t seed = 0;
  std::string model_out;
  std::string report_out;
  std::string inference_out;
  double level = 0.95;
};

void run_fit(const FitArgs& a, const std::string& cmd) {
  const TensorSeries s = read_series(a.in);
  ModelSpec spec{s.dims, a.kranks};
  spec.validate();
  std::string noise = a.noise;
  if (noise.empty()) noise = (a.estimator == "mle") ? "separable" : "dense";
  if (a.estimator == "mle" && noise == "dense")
    throw InvalidInput("MLE requires separable covariance");

  FitOptions opts;
  opts.max_sweeps = a.max_sweeps;
  opts.rel_tol = a.rel_tol;
  opts.ridge = a.ridge;
  opts.cp_restarts = a.cp_restarts;
  opts.seed = a.seed;

  FitReport rep;
  if (a.estimator == "proj") {
    rep.model = proj_estimator(s, spec, a.seed, noise == "separable",
                               a.cp_restarts);
    rep.sse = sse_over(s, rep.model);
    rep.n_eff = s.length() - spec.order();
    rep.objective_trace = {rep.sse};
    rep.converged = true;
  } else if (a.estimator == "lse") {
    rep = fit_lse(s, spec, opts);
    if (noise == "separable")
      rep.model.noise = NoiseSpec::separable(
          hier_svd_sep_cov(rep.model.noise.full_cov(s.dims), s.dims));
  } else if (a.estimator == "mle") {
    rep = fit_mle(s, spec, opts);
  } else {
    throw InvalidInput("unknown estimator '" + a.estimator +
                       "' (expected proj, lse or mle)");
  }

  write_model(a.model_out, rep.model);
  write_meta_sidecar(a.model_out, cmd);
  if (!a.report_out.empty()) {
    write_fit_report(a.report_out, rep);
    write_meta_sidecar(a.report_out, cmd);
  }
  if (!a.inference_out.empty()) {
    if (a.estimator == "proj")
      throw InvalidInput("inference requires --estimator lse or mle");
    const EstimatorKind kind = a.estimator == "mle"
                                   ? EstimatorKind::MaximumLikelihood
                                   : EstimatorKind::LeastSquares;
    const AsymptoticInference inf = asymp_cov(s, rep.model, kind);
    write_inference_report(a.inference_out, rep.model, inf, a.level);
    write_meta_sidecar(a.inference_out, cmd);
  }
  std::cout << "fit: estimator=" << a.estimator << " sse=" << rep.sse
            << " sweeps=" << rep.sweeps
            << (rep.converged ? " converged" : " not-converged") << "\n";
}

struct SelectArgs {
  std::string in;
  int p_max = 1;
  int r_max = 1;
  std::string penalty = "ic1";
  std::string mode = "joint";
  int max_sweeps = 200;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
  std::string out;
};

void run_select(const SelectArgs& a, const std::string& cmd) {
  const TensorSeries s = read_series(a.in);
  if (a.p_max < 1 || a.r_max < 1)
    throw InvalidInput("pmax and rmax must be at least 1");
  FitOptions opts;
  opts.max_sweeps = a.max_sweeps;
  opts.rel_tol = a.rel_tol;
  opts.seed = a.seed;
  const Penalty pen = penalty_from(a.penalty);
  SelectionReport rep;
  if (a.mode == "joint")
    rep = select_joint(s, a.p_max, a.r_max, pen, opts);
  else if (a.mode == "separate")
    rep = select_separate(s, a.p_max, a.r_max, pen, opts);
  else
    throw InvalidInput("unknown mode '" + a.mode +
                       "' (expected joint or separate)");
  write_selection_report(a.out, rep);
  write_meta_sidecar(a.out, cmd);
  std::cout << "select: chosen kranks ";
  if (rep.chosen.empty()) {
    std::cout << "none (white noise)";
  } else {
    for (std::size_t i = 0; i < rep.chosen.size(); ++i)
      std::cout << (i ? "+" : "") << rep.chosen[i];
  }
  std::cout << ", order " << rep.chosen_order << "\n";
}

struct ForecastArgs {
  std::string in;
  std::string model;
  Index steps = 1;
  std::string out;
};

void run_forecast(const ForecastArgs& a, const std::string& cmd) {
  const TensorSeries s = read_series(a.in);
  const TenArModel m = read_model(a.model);
  if (m.spec.dims != s.dims)
    throw InvalidInput("model dims do not match the series");
  const Index p = m.spec.order();
  if (s.length() < p)
    throw InvalidInput("series shorter than the model order");
  if (a.steps < 1) throw InvalidInput("steps must be at least 1");
  std::vector<DenseTensor> window;
  for (Index i = 0; i < p; ++i)
    window.push_back(s.obs[static_cast<std::size_t>(s.length() - 1 - i)]);
  TensorSeries pred;
  pred.dims = s.dims;
  for (Index h = 0; h < a.steps; ++h) {
    DenseTensor next = predict_one(m, window);
    window.insert(window.begin(), next);
    window.pop_back();
    pred.obs.push_back(std::move(next));
  }
  write_series(a.out, pred);
  write_meta_sidecar(a.out, cmd);
  std::cout << "forecast: wrote " << a.steps << " predicted steps to " << a.out
            << "\n";
}

struct EvalArgs {
  std::string in;
  std::vector<int> kranks;
  std::string estimator = "lse";
  Index t0 = 0;
  int refit_every = 1;
  std::vector<std::string> baselines{"iar", "var", "mean", "rw"};
  double detrend_alpha = -1.0;  // negative = off
  int max_sweeps = 200;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
  std::string out;
  std::string steps_out;
};

void run_eval(const EvalArgs& a, const std::string& cmd) {
  const TensorSeries s = read_series(a.in);
  std::optional<ModelSpec> spec;
  if (!a.kranks.empty()) {
    spec = ModelSpec{s.dims, a.kranks};
    spec->validate();
  }
  EstimatorKind kind;
  if (a.estimator == "lse")
    kind = EstimatorKind::LeastSquares;
  else if (a.estimator == "mle")
    kind = EstimatorKind::MaximumLikelihood;
  else
    throw InvalidInput("unknown estimator '" + a.estimator +
                       "' (expected lse or mle)");
  FitOptions opts;
  opts.max_sweeps = a.max_sweeps;
  opts.rel_tol = a.rel_tol;
  opts.seed = a.seed;
  EvalConfig cfg;
  cfg.t0 = a.t0;
  cfg.refit_every = a.refit_every;
  for (const std::string& b : a.baselines)
    cfg.baselines.push_back(baseline_from(b));
  if (a.detrend_alpha >= 0.0) {
    if (!(a.detrend_alpha > 0.0 && a.detrend_alpha <= 1.0))
      throw InvalidInput("detrend alpha must lie in (0, 1]");
    cfg.detrend_alpha = a.detrend_alpha;
  }
  const ForecastReport rep = rolling_eval(s, spec, kind, opts, cfg);
  write_forecast_report(a.out, rep);
  write_meta_sidecar(a.out, cmd);
  if (!a.steps_out.empty()) {
    write_step_errors(a.steps_out, rep);
    write_meta_sidecar(a.steps_out, cmd);
  }
  std::cout << "eval: " << rep.origin_count << " origins, total "
            << rep.total << "\n";
  for (const MethodResult& m : rep.methods)
    std::cout << "  " << m.name << ": mse " << m.mse
              << (m.failed_origins
                      ? " (" + std::to_string(m.failed_origins) +
                            " fallback origins)"
                      : "")
              << "\n";
}

void run_inspect(const std::string& model_path) {
  const TenArModel m = read_model(model_path);
  std::cout << "dims:";
  for (Index dk : m.spec.dims) std::cout << ' ' << dk;
  std::cout << "\nkranks:";
  for (int r : m.spec.kranks) std::cout << ' ' << r;
  const char* noise_name = m.noise.kind == NoiseKind::Identity ? "identity"
                           : m.noise.kind == NoiseKind::Dense  ? "dense"
                                                               : "separable";
  std::cout << "\nnoise: " << noise_name << "\n";
  const CausalReport cr = causal(m);
  std::cout << "spectral radius: " << cr.radius
            << (cr.causal ? " (causal)" : " (NOT causal)")
            << (cr.radius_converged ? "" : " [radius did not converge]")
            << "\n";
  for (Index i = 0; i < m.spec.order(); ++i)
    for (Index r = 0; r < m.spec.kranks[static_cast<std::size_t>(i)]; ++r) {
      std::cout << "lag " << (i + 1) << " term " << (r + 1)
                << " factor norms:";
      for (Index k = 0; k < m.spec.mode_count(); ++k)
        std::cout << ' ' << m.coeff(i, r, k).norm();
      std::cout << "\n";
    }
  const IdentifiabilityReport ir = identifiability_check(m);
  std::cout << "identifiability: " << (ir.holds ? "holds" : "not established")
            << "\n";
  for (std::size_t i = 0; i < ir.lags.size(); ++i) {
    std::cout << "  lag " << (i + 1) << ": factor ranks";
    for (Index rk : ir.lags[i].factor_ranks) std::cout << ' ' << rk;
    if (m.spec.mode_count() == 2)
      std::cout << ", orthogonality residual "
                << ir.lags[i].orthogonality_residual;
    std::cout << (ir.lags[i].holds ? " (ok)" : " (fails)") << "\n";
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "Autoregressive modeling of tensor-valued time series.\n"
      "Exit codes: 0 success, 1 validation or usage error, 2 numerical "
      "failure.",
      "tenar"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Flat key=value file supplying any long option "
                 "([subcommand] sections); unknown keys are rejected");
  app.allow_config_extras(CLI::config_extras_mode::error);
  const std::string cmd = joined_command(argc, argv);

  SimulateArgs sim;
  CLI::App* c_sim =
      app.add_subcommand("simulate", "Draw a random model and simulate a series");
  c_sim->add_option("--dims", sim.dims, "Mode extents d_1,...,d_K")
      ->required()
      ->delimiter(',');
  c_sim->add_option("--p", sim.p, "Autoregressive order");
  c_sim->add_option("--kranks", sim.kranks,
                    "Terms per lag R_1,...,R_p (one value broadcasts)")
      ->required()
      ->delimiter(',');
  c_sim->add_option("--rho", sim.rho, "Companion spectral radius target");
  c_sim->add_option("--T", sim.T, "Series length")->required();
  c_sim->add_option("--setting", sim.setting,
                    "Noise family: I identity, II dense, III separable")
      ->check(CLI::IsMember({"I", "II", "III"}));
  c_sim->add_option("--seed", sim.seed, "Random seed");
  c_sim->add_option("--burn-in", sim.burn_in, "Discarded initial steps");
  c_sim->add_option("--out", sim.out, "Series output path (.csv for text)")
      ->required();
  c_sim->add_option("--model-out", sim.model_out,
                    "Generating model path (default: <out>.model.json)");
  c_sim->callback([&] { run_simulate(sim, cmd); });

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "Estimate a model from a series");
  c_fit->add_option("--in", fit.in, "Series input path")->required();
  c_fit->add_option("--kranks", fit.kranks, "Terms per lag R_1,...,R_p")
      ->required()
      ->delimiter(',');
  c_fit->add_option("--estimator", fit.estimator, "proj, lse or mle")
      ->check(CLI::IsMember({"proj", "lse", "mle"}));
  c_fit->add_option("--noise", fit.noise,
                    "Fitted covariance form: dense or separable "
                    "(default: dense for proj/lse, separable for mle)")
      ->check(CLI::IsMember({"dense", "separable"}));
  c_fit->add_option("--max-sweeps", fit.max_sweeps, "Sweep cap");
  c_fit->add_option("--tol", fit.rel_tol, "Relative convergence tolerance");
  c_fit->add_option("--ridge", fit.ridge,
                    "Gram ridge (negative = automatic, 0 = off)");
  c_fit->add_option("--cp-restarts", fit.cp_restarts,
                    "Random restarts in the projection decomposition");
  c_fit->add_option("--seed", fit.seed, "Random seed");
  c_fit->add_option("--model-out", fit.model_out, "Fitted model path")
      ->required();
  c_fit->add_option("--report-out", fit.report_out, "Fit report path (JSON)");
  c_fit->add_option("--inference-out", fit.inference_out,
                    "Entrywise confidence interval table path (CSV)");
  c_fit->add_option("--level", fit.level, "Interval coverage level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  c_fit->callback([&] { run_fit(fit, cmd); });

  SelectArgs sel;
  CLI::App* c_sel =
      app.add_subcommand("select", "Search rank configurations by criterion");
  c_sel->add_option("--in", sel.in, "Series input path")->required();
  c_sel->add_option("--pmax", sel.p_max, "Order cap")->required();
  c_sel->add_option("--rmax", sel.r_max, "Per-lag rank cap")->required();
  c_sel->add_option("--penalty", sel.penalty, "ic1 (per term) or ic2 (per parameter)")
      ->check(CLI::IsMember({"ic1", "ic2"}));
  c_sel->add_option("--mode", sel.mode, "joint or separate")
      ->check(CLI::IsMember({"joint", "separate"}));
  c_sel->add_option("--max-sweeps", sel.max_sweeps, "Sweep cap per cell");
  c_sel->add_option("--tol", sel.rel_tol, "Relative convergence tolerance");
  c_sel->add_option("--seed", sel.seed, "Random seed");
  c_sel->add_option("--out", sel.out, "Selection report path (CSV)")
      ->required();
  c_sel->callback([&] { run_select(sel, cmd); });

  ForecastArgs fc;
  CLI::App* c_fc = app.add_subcommand(
      "forecast", "Iterated point forecasts from a fitted model");
  c_fc->add_option("--in", fc.in, "Series input path")->required();
  c_fc->add_option("--model", fc.model, "Model input path")->required();
  c_fc->add_option("--steps", fc.steps, "Forecast horizon");
  c_fc->add_option("--out", fc.out, "Predicted series output path")->required();
  c_fc->callback([&] { run_forecast(fc, cmd); });

  EvalArgs ev;
  CLI::App* c_ev = app.add_subcommand(
      "eval", "Rolling one-step evaluation against reference methods");
  c_ev->add_option("--in", ev.in, "Series input path")->required();
  c_ev->add_option("--kranks", ev.kranks,
                   "Model configuration (omit to run baselines only)")
      ->delimiter(',');
  c_ev->add_option("--estimator", ev.estimator, "lse or mle")
      ->check(CLI::IsMember({"lse", "mle"}));
  c_ev->add_option("--t0", ev.t0, "First predicted index (1-based)")
      ->required();
  c_ev->add_option("--refit-every", ev.refit_every,
                   "Refit cadence in origins (0 = fit once)");
  c_ev->add_option("--baselines", ev.baselines,
                   "Comma list from iar,var,mean,rw,es")
      ->delimiter(',');
  c_ev->add_option("--detrend-alpha", ev.detrend_alpha,
                   "Exponential smoothing weight; enables detrending");
  c_ev->add_option("--max-sweeps", ev.max_sweeps, "Sweep cap per fit");
  c_ev->add_option("--tol", ev.rel_tol, "Relative convergence tolerance");
  c_ev->add_option("--seed", ev.seed, "Random seed");
  c_ev->add_option("--out", ev.out, "Evaluation report path (CSV)")->required();
  c_ev->add_option("--steps-out", ev.steps_out,
                   "Per-step squared error table path (CSV)");
  c_ev->callback([&] { run_eval(ev, cmd); });

  std::string inspect_model;
  CLI::App* c_in = app.add_subcommand("inspect", "Print a model summary");
  c_in->add_option("--model", inspect_model, "Model input path")->required();
  c_in->callback([&] { run_inspect(inspect_model); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n"
              << app.help("", CLI::AppFormatMode::Normal);
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace tenar
