#include "tenar/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "tenar/permutation.hpp"
#include "tenar/rng.hpp"
#include "tenar/simulate.hpp"

namespace tenar {

namespace {

Index resolve_t_start(Index T, Index p, Index t_start, const char* who) {
  const Index t0 = t_start < 0 ? p : t_start;
  if (t0 < p)
    throw InvalidInput(std::string(who) + ": fit window starts before lag depth");
  if (T - t0 < 1)
    throw InvalidInput(std::string(who) + ": series too short for fit window");
  return t0;
}

// Solves A * gram = cross for A with gram symmetric, verifying the
// solution actually satisfies the system (LDLT does not signal rank
// deficiency on its own).
Matrix solve_block(const Matrix& gram, const Matrix& cross, const char* who) {
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError(std::string(who) + ": block system factorization failed");
  Matrix at = ldlt.solve(cross.transpose());
  const double scale = std::max(cross.cwiseAbs().maxCoeff(), 1e-300);
  if (((gram * at - cross.transpose()).cwiseAbs().maxCoeff()) > 1e-6 * scale)
    throw NumericalError(std::string(who) + ": singular block system");
  return at.transpose();
}

double ridge_for(const Matrix& gram, double requested) {
  if (requested >= 0.0) return requested;
  return 1e-10 * gram.trace() / static_cast<double>(gram.rows());
}

DenseTensor predict_at(const TenArModel& m, const TensorSeries& s, Index t) {
  DenseTensor pred(m.spec.dims);
  for (Index i = 0; i < m.spec.order(); ++i) {
    const DenseTensor& x = s.obs[static_cast<std::size_t>(t - 1 - i)];
    for (const auto& term : m.coeffs[static_cast<std::size_t>(i)]) {
      DenseTensor acc = x;
      for (Index k = 0; k < m.spec.mode_count(); ++k)
        acc = mode_product(acc, term[static_cast<std::size_t>(k)], k);
      pred.vec() += acc.vec();
    }
  }
  return pred;
}

Matrix sym_clamp_psd(const Matrix& m) {
  Matrix s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success)
    throw NumericalError("covariance factor eigendecomposition failed");
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Matrix vec_to_square(const Vector& v, Index d) {
  return Eigen::Map<const Matrix>(v.data(), d, d);
}

}  // namespace

VarFit var_ols(const TensorSeries& s, Index p, double ridge, Index t_start) {
  s.validate();
  if (p < 1) throw InvalidInput("var_ols: order must be positive");
  const Index T = s.length();
  const Index d = product(s.dims);
  const Index t0 = resolve_t_start(T, p, t_start, "var_ols");
  const Index n = T - t0;
  if (n <= p * d)
    throw InvalidInput(
        "var_ols: series too short for the regression (needs more than p*d "
        "fitted equations)");

  Matrix gram = Matrix::Zero(d * p, d * p);
  Matrix cross = Matrix::Zero(d, d * p);
  Vector z(d * p);
  for (Index t = t0; t < T; ++t) {
    for (Index i = 0; i < p; ++i)
      z.segment(i * d, d) = s.obs[static_cast<std::size_t>(t - 1 - i)].vec();
    gram.noalias() += z * z.transpose();
    cross.noalias() += s.obs[static_cast<std::size_t>(t)].vec() * z.transpose();
  }
  if (ridge > 0.0) gram.diagonal().array() += ridge;
  // A nearly noiseless window can leave directions that decayed below
  // machine precision, and LDLT then returns arbitrary components along
  // the numerical null space while the residual stays small.  Detect
  // the rank deficiency and stabilize with a trace-scaled ridge.
  {
    Eigen::LDLT<Matrix> probe(gram);
    const Vector dv = probe.vectorD().cwiseAbs();
    if (probe.info() != Eigen::Success ||
        dv.minCoeff() <= 1e-12 * dv.maxCoeff())
      gram.diagonal().array() +=
          1e-10 * gram.trace() / static_cast<double>(gram.rows());
  }
  const Matrix stacked = solve_block(gram, cross, "var_ols");

  VarFit fit;
  fit.n_eff = n;
  for (Index i = 0; i < p; ++i) fit.phi.push_back(stacked.middleCols(i * d, d));
  Matrix cov = Matrix::Zero(d, d);
  for (Index t = t0; t < T; ++t) {
    for (Index i = 0; i < p; ++i)
      z.segment(i * d, d) = s.obs[static_cast<std::size_t>(t - 1 - i)].vec();
    Vector r = s.obs[static_cast<std::size_t>(t)].vec() - stacked * z;
    cov.noalias() += r * r.transpose();
  }
  fit.resid_cov = cov / static_cast<double>(n);
  return fit;
}

namespace {

// Khatri-Rao chain of the factor columns, skipping one mode: column r
// is the Kronecker stack of column r of every other factor, first mode
// fastest.  Matches the canonical unfolding so that
// G_(k) ~ U_k diag(w) chain'.
Matrix kr_chain_skip(const std::vector<Matrix>& factors, Index skip) {
  const Index R = factors[0].cols();
  Index rows = 1;
  for (Index k = 0; k < static_cast<Index>(factors.size()); ++k)
    if (k != skip) rows *= factors[static_cast<std::size_t>(k)].rows();
  Matrix out(rows, R);
  Vector col;
  for (Index r = 0; r < R; ++r) {
    col = Vector::Ones(1);
    for (Index k = 0; k < static_cast<Index>(factors.size()); ++k) {
      if (k == skip) continue;
      const auto& f = factors[static_cast<std::size_t>(k)];
      Vector next(col.size() * f.rows());
      for (Index j = 0; j < f.rows(); ++j)
        next.segment(j * col.size(), col.size()) = f(j, r) * col;
      col = std::move(next);
    }
    out.col(r) = col;
  }
  return out;
}

struct CpWork {
  std::vector<Matrix> factors;  // dims[k] x R, columns unit norm
  Vector weights;
  double residual = 0.0;
  bool converged = false;
};

CpWork cp_als_run(const DenseTensor& t, const std::vector<Matrix>& unfold,
                  std::vector<Matrix> factors, int max_iter) {
  const Index K = t.order();
  const Index R = factors[0].cols();
  const double tnorm2 = t.vec().squaredNorm();
  Vector weights = Vector::Ones(R);
  double prev_err2 = tnorm2;
  CpWork best;
  double err2 = tnorm2;
  for (int iter = 0; iter < max_iter; ++iter) {
    for (Index k = 0; k < K; ++k) {
      Matrix gram = Matrix::Ones(R, R);
      for (Index l = 0; l < K; ++l)
        if (l != k)
          gram = gram.cwiseProduct(factors[static_cast<std::size_t>(l)].transpose() *
                                   factors[static_cast<std::size_t>(l)]);
      const Matrix z = kr_chain_skip(factors, k);
      const Matrix p = unfold[static_cast<std::size_t>(k)] * z;
      Matrix g = gram;
      g.diagonal().array() += 1e-12 * std::max(gram.trace() / R, 1e-300);
      Eigen::LDLT<Matrix> ldlt(g);
      Matrix u = ldlt.solve(p.transpose()).transpose();
      for (Index r = 0; r < R; ++r) {
        const double nrm = u.col(r).norm();
        weights[r] = nrm;
        if (nrm > 1e-300)
          u.col(r) /= nrm;
        else
          u.col(r).setZero();
      }
      factors[static_cast<std::size_t>(k)] = u;
      if (k == K - 1) {
        // All cross terms are available here: p already holds
        // G_(k) * chain, so the fit is exact, not an estimate.
        Matrix full_gram = gram.cwiseProduct(u.transpose() * u);
        double inner = 0.0;
        for (Index r = 0; r < R; ++r)
          inner += weights[r] * u.col(r).dot(p.col(r));
        err2 = tnorm2 - 2.0 * inner +
               weights.dot(full_gram * weights);
      }
    }
    // Converged when the fit is exact to machine precision or the
    // squared error has stopped moving relative to its own size.  The
    // plateau test must scale with err2, not the tensor norm, or small
    // residuals become unresolvable.
    const double floor2 = 1e-24 * std::max(tnorm2, 1e-300);
    if (err2 <= floor2 ||
        std::abs(prev_err2 - err2) <= 1e-10 * std::max(err2, floor2)) {
      best.converged = true;
      break;
    }
    prev_err2 = err2;
  }
  best.factors = std::move(factors);
  best.weights = weights;
  best.residual = std::sqrt(std::max(err2, 0.0));
  return best;
}

}  // namespace

CpResult cp_rank_r(const DenseTensor& t, int rank, int restarts,
                   std::uint64_t seed) {
  const Index K = t.order();
  if (rank < 1) throw InvalidInput("cp_rank_r: rank must be positive");
  for (Index k = 0; k < K; ++k)
    if (rank > t.dims()[static_cast<std::size_t>(k)])
      throw InvalidInput("cp_rank_r: rank exceeds a mode extent");

  CpResult out;
  if (K == 1) {
    CpComponent c;
    c.weight = t.vec().norm();
    c.factors.push_back(c.weight > 0 ? Vector(t.vec() / c.weight)
                                     : Vector(Vector::Unit(t.size(), 0)));
    out.components.push_back(std::move(c));
    out.residual = 0.0;
    out.converged = true;
    return out;
  }

  if (K == 2) {
    const Matrix m = matricize(t, 0);
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double tail = 0.0;
    for (Index j = rank; j < svd.singularValues().size(); ++j)
      tail += svd.singularValues()[j] * svd.singularValues()[j];
    for (Index r = 0; r < rank; ++r) {
      CpComponent c;
      c.weight = svd.singularValues()[r];
      c.factors.push_back(svd.matrixU().col(r));
      c.factors.push_back(svd.matrixV().col(r));
      out.components.push_back(std::move(c));
    }
    out.residual = std::sqrt(tail);
    out.converged = true;
    return out;
  }

  std::vector<Matrix> unfold;
  for (Index k = 0; k < K; ++k) unfold.push_back(matricize(t, k));

  std::vector<std::vector<Matrix>> inits;
  {
    // Higher-order SVD start: leading left singular vectors per mode.
    std::vector<Matrix> f;
    for (Index k = 0; k < K; ++k) {
      Eigen::BDCSVD<Matrix> svd(unfold[static_cast<std::size_t>(k)],
                                Eigen::ComputeThinU);
      f.push_back(svd.matrixU().leftCols(rank));
    }
    inits.push_back(std::move(f));
  }
  Rng root(seed);
  for (int s = 0; s < restarts; ++s) {
    Rng rng = root.stream(static_cast<std::uint64_t>(s) + 1);
    std::vector<Matrix> f;
    for (Index k = 0; k < K; ++k) {
      Matrix u = rng.normal_matrix(t.dims()[static_cast<std::size_t>(k)], rank);
      for (Index r = 0; r < rank; ++r) u.col(r).normalize();
      f.push_back(std::move(u));
    }
    inits.push_back(std::move(f));
  }

  CpWork best;
  bool have = false;
  for (auto& f : inits) {
    CpWork w = cp_als_run(t, unfold, std::move(f), 500);
    if (!have || w.residual < best.residual) {
      best = std::move(w);
      have = true;
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(rank));
  for (Index r = 0; r < rank; ++r) order[static_cast<std::size_t>(r)] = r;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return best.weights[a] > best.weights[b];
  });
  for (Index r : order) {
    CpComponent c;
    c.weight = best.weights[r];
    for (Index k = 0; k < K; ++k)
      c.factors.push_back(best.factors[static_cast<std::size_t>(k)].col(r));
    out.components.push_back(std::move(c));
  }
  out.residual = best.residual;
  out.converged = best.converged;
  return out;
}

std::vector<Matrix> hier_svd_sep_cov(const Matrix& sigma, const Dims& dims) {
  const Index d = product(dims);
  if (sigma.rows() != d || sigma.cols() != d)
    throw InvalidInput("hier_svd_sep_cov: shape does not match dims");
  const Index K = static_cast<Index>(dims.size());
  std::vector<Matrix> factors;
  Matrix rem = sigma;
  Index rest = d;
  for (Index k = 0; k + 1 < K; ++k) {
    const Index dk = dims[static_cast<std::size_t>(k)];
    rest /= dk;
    // Two-mode rearrangement of the remainder: exactly separable input
    // makes this matrix rank one with the factor pair as its leading
    // singular vectors.
    const DenseTensor g = rearrange_phi(rem, {dk, rest});
    const Matrix m = matricize(g, 0);
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double s1 = svd.singularValues()[0];
    Matrix mk = vec_to_square(svd.matrixU().col(0), dk);
    const double sign = mk.trace() < 0.0 ? -1.0 : 1.0;
    factors.push_back(sym_clamp_psd(sign * mk));
    Vector remvec = sign * s1 * svd.matrixV().col(0);
    rem = vec_to_square(remvec, rest);
  }
  factors.push_back(sym_clamp_psd(rem));
  return NoiseSpec::separable(std::move(factors)).factors;
}

TenArModel proj_estimator(const TensorSeries& s, const ModelSpec& spec,
                          std::uint64_t seed, bool separable_noise,
                          int cp_restarts, Index t_start) {
  spec.validate();
  s.validate();
  if (s.dims != spec.dims)
    throw InvalidInput("proj_estimator: series dims do not match spec");
  const Index K = spec.mode_count();
  const VarFit var = var_ols(s, spec.order(), 0.0, t_start);

  TenArModel m = zero_model(spec);
  Rng root(seed);
  for (Index i = 0; i < spec.order(); ++i) {
    const int Ri = spec.kranks[static_cast<std::size_t>(i)];
    if (Ri == 0) continue;
    if (K == 1) {
      // A sum of scalar-mode terms is unidentified; split evenly.
      for (Index r = 0; r < Ri; ++r)
        m.coeff(i, r, 0) = var.phi[static_cast<std::size_t>(i)] / Ri;
      continue;
    }
    const DenseTensor g = rearrange_phi(var.phi[static_cast<std::size_t>(i)], spec.dims);
    const CpResult cp =
        cp_rank_r(g, Ri, cp_restarts, root.stream(static_cast<std::uint64_t>(i)).next_u64());
    for (Index r = 0; r < Ri; ++r) {
      const CpComponent& c = cp.components[static_cast<std::size_t>(r)];
      for (Index k = 0; k < K; ++k) {
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        m.coeff(i, r, k) = vec_to_square(c.factors[static_cast<std::size_t>(k)], dk);
      }
      m.coeff(i, r, K - 1) *= c.weight;
    }
  }
  m.noise = separable_noise
                ? NoiseSpec::separable(hier_svd_sep_cov(var.resid_cov, spec.dims))
                : NoiseSpec::make_dense(var.resid_cov);
  return normalize(m);
}

namespace {

std::vector<Matrix> noise_factors_for_loglik(const TenArModel& m) {
  const Index K = m.spec.mode_count();
  switch (m.noise.kind) {
    case NoiseKind::Separable:
      return m.noise.factors;
    case NoiseKind::Identity: {
      std::vector<Matrix> f;
      for (Index k = 0; k < K; ++k) {
        const Index dk = m.spec.dims[static_cast<std::size_t>(k)];
        f.push_back(Matrix::Identity(dk, dk));
      }
      return f;
    }
    case NoiseKind::Dense:
      throw InvalidInput("log-likelihood requires separable covariance");
  }
  throw InvalidInput("unknown noise kind");
}

struct SepCovOps {
  std::vector<Matrix> inv;      // per-factor inverses
  std::vector<double> logdet;   // per-factor log determinants
};

SepCovOps factor_ops(const std::vector<Matrix>& factors) {
  SepCovOps ops;
  for (const Matrix& f : factors) {
    Eigen::LLT<Matrix> llt(f);
    if (llt.info() != Eigen::Success)
      throw NumericalError("covariance factor is not positive definite");
    const Matrix l = llt.matrixL();
    double ld = 0.0;
    for (Index j = 0; j < l.rows(); ++j) ld += 2.0 * std::log(l(j, j));
    ops.inv.push_back(llt.solve(Matrix::Identity(f.rows(), f.rows())));
    ops.logdet.push_back(ld);
  }
  return ops;
}

double loglik_from_parts(const SepCovOps& ops,
                         const std::vector<DenseTensor>& resid,
                         const Dims& dims) {
  const Index K = static_cast<Index>(dims.size());
  const Index d = product(dims);
  const double n = static_cast<double>(resid.size());
  double ll = -0.5 * n * static_cast<double>(d) * std::log(2.0 * 3.14159265358979323846);
  for (Index k = 0; k < K; ++k)
    ll -= 0.5 * n * static_cast<double>(d / dims[static_cast<std::size_t>(k)]) *
          ops.logdet[static_cast<std::size_t>(k)];
  // Quadratic form through the last mode's unfolding; any mode gives
  // the same value.
  const Index k = K - 1;
  const Matrix sinv = K == 1 ? Matrix::Identity(1, 1)
                             : kron_chain_skip(ops.inv, k);
  const Matrix& finv = ops.inv[static_cast<std::size_t>(k)];
  double quad = 0.0;
  for (const DenseTensor& r : resid) {
    const Matrix rk = matricize(r, k);
    quad += ((finv * rk).cwiseProduct(rk * sinv)).sum();
  }
  return ll - 0.5 * quad;
}

std::vector<DenseTensor> residuals_over(const TenArModel& m,
                                        const TensorSeries& s, Index t0) {
  std::vector<DenseTensor> resid;
  resid.reserve(static_cast<std::size_t>(s.length() - t0));
  for (Index t = t0; t < s.length(); ++t) {
    DenseTensor r = s.obs[static_cast<std::size_t>(t)];
    r.vec() -= predict_at(m, s, t).vec();
    resid.push_back(std::move(r));
  }
  return resid;
}

double sse_of(const std::vector<DenseTensor>& resid) {
  double sse = 0.0;
  for (const DenseTensor& r : resid) sse += r.vec().squaredNorm();
  return sse;
}

Matrix sample_cov(const std::vector<DenseTensor>& resid, Index d) {
  Matrix cov = Matrix::Zero(d, d);
  for (const DenseTensor& r : resid) cov.noalias() += r.vec() * r.vec().transpose();
  return cov / static_cast<double>(resid.size());
}

TenArModel initial_model(const TensorSeries& s, const ModelSpec& spec,
                         const FitOptions& opts, bool separable_noise,
                         const char* who) {
  switch (opts.init) {
    case InitKind::Projection:
      return proj_estimator(s, spec, opts.seed, separable_noise,
                            opts.cp_restarts, opts.t_start);
    case InitKind::Provided: {
      if (!opts.init_model)
        throw InvalidInput(std::string(who) + ": no starting model provided");
      TenArModel m = *opts.init_model;
      if (m.spec.dims != spec.dims || m.spec.kranks != spec.kranks)
        throw InvalidInput(std::string(who) +
                           ": starting model shape does not match spec");
      return normalize(m);
    }
    case InitKind::Scalar: {
      TenArModel m = zero_model(spec);
      for (Index i = 0; i < spec.order(); ++i)
        for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r)
          for (Index k = 0; k < spec.mode_count(); ++k) {
            const Index dk = spec.dims[static_cast<std::size_t>(k)];
            m.coeff(i, r, k) =
                opts.scalar_init * Matrix::Identity(dk, dk);
          }
      return normalize(m);
    }
  }
  throw InvalidInput("unknown init kind");
}

// One alternating block update pass shared by the two fitters.  When
// sinv is null the update is plain least squares; otherwise it is the
// generalized version weighted by the inverse covariance of the
// non-updated modes.
// Writes the mode unfolding of x into out without allocating (out is
// resized on first use and reused afterwards).
void matricize_into(const DenseTensor& x, Index mode, Matrix& out) {
  const Dims& dims = x.dims();
  Index inner = 1, outer = 1;
  for (Index m = 0; m < mode; ++m)
    inner *= dims[static_cast<std::size_t>(m)];
  const Index dk = dims[static_cast<std::size_t>(mode)];
  for (Index m = mode + 1; m < static_cast<Index>(dims.size()); ++m)
    outer *= dims[static_cast<std::size_t>(m)];
  out.resize(dk, inner * outer);
  const Vector& v = x.vec();
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < dk; ++i)
      out.row(i).segment(o * inner, inner) =
          v.segment(o * inner * dk + i * inner, inner);
}

// Entry (ii, c) of a mode-k unfolding sits at vec position
// pos[ii + dk * c]; one map per mode turns the stacked layouts below
// back into canonical vectors.
std::vector<std::vector<Index>> unfold_positions(const Dims& dims) {
  const Index K = static_cast<Index>(dims.size());
  std::vector<std::vector<Index>> pos(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) {
    Index inner = 1, outer = 1;
    for (Index m = 0; m < k; ++m) inner *= dims[static_cast<std::size_t>(m)];
    const Index dk = dims[static_cast<std::size_t>(k)];
    for (Index m = k + 1; m < K; ++m) outer *= dims[static_cast<std::size_t>(m)];
    auto& pk = pos[static_cast<std::size_t>(k)];
    pk.resize(static_cast<std::size_t>(dk * inner * outer));
    for (Index o = 0; o < outer; ++o)
      for (Index in = 0; in < inner; ++in)
        for (Index ii = 0; ii < dk; ++ii)
          pk[static_cast<std::size_t>(ii + dk * (o * inner + in))] =
              o * inner * dk + ii * inner + in;
  }
  return pos;
}

// stacks[k][i] holds the mode-k unfoldings of the lag-(i+1)
// observations for the whole fit window, stacked vertically: row block
// j (height d_k) is matricize(obs[t0 + j - 1 - i], k).  Stacking turns
// every per-step factor product of a sweep into one large matrix
// product, which is where almost all fit time goes.
using LagStacks = std::vector<std::vector<Matrix>>;

LagStacks stack_lags(const TensorSeries& s, const ModelSpec& spec, Index t0) {
  const Index K = spec.mode_count();
  const Index p = spec.order();
  const Index n = s.length() - t0;
  const Index d = spec.vec_dim();
  const auto pos = unfold_positions(spec.dims);
  LagStacks stacks(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) {
    const Index dk = spec.dims[static_cast<std::size_t>(k)];
    const Index cols = d / dk;
    const auto& pk = pos[static_cast<std::size_t>(k)];
    stacks[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) {
      Matrix& m = stacks[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      m.resize(dk * n, cols);
      for (Index c = 0; c < cols; ++c)
        for (Index j = 0; j < n; ++j) {
          const Vector& v =
              s.obs[static_cast<std::size_t>(t0 + j - 1 - i)].vec();
          for (Index ii = 0; ii < dk; ++ii)
            m(j * dk + ii, c) = v[pk[static_cast<std::size_t>(ii + dk * c)]];
        }
    }
  }
  return stacks;
}

// Rebuilds the residuals from scratch through the last mode's
// unfolding (any mode gives the same values up to rounding); called
// between sweeps so incremental updates cannot drift.
void recompute_residuals(const TenArModel& m, const TensorSeries& s, Index t0,
                         const LagStacks& stacks,
                         std::vector<DenseTensor>& resid) {
  const ModelSpec& spec = m.spec;
  const Index K = spec.mode_count();
  const Index n = s.length() - t0;
  const Index d = spec.vec_dim();
  const Index k = K - 1;
  const Index dk = spec.dims.back();
  const Index cols = d / dk;
  const auto pos = unfold_positions(spec.dims);
  const auto& pk = pos[static_cast<std::size_t>(k)];
  resid.clear();
  resid.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j)
    resid.push_back(s.obs[static_cast<std::size_t>(t0 + j)]);
  Matrix wv, u;
  for (Index i = 0; i < spec.order(); ++i) {
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r) {
      const Matrix phik =
          K == 1 ? Matrix::Identity(1, 1)
                 : kron_chain_skip(m.coeffs[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(r)], k);
      wv.noalias() =
          stacks[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] *
          phik.transpose();
      Eigen::Map<const Matrix> hw(wv.data(), dk, n * cols);
      u.noalias() = m.coeff(i, r, k) * hw;
      for (Index c = 0; c < cols; ++c)
        for (Index j = 0; j < n; ++j) {
          Vector& v = resid[static_cast<std::size_t>(j)].vec();
          for (Index ii = 0; ii < dk; ++ii)
            v[pk[static_cast<std::size_t>(ii + dk * c)]] -= u(ii, c * n + j);
        }
    }
  }
}

// One full pass over every factor of every term.  Each block update is
// an exact (generalized) least squares solve given all other blocks;
// sinv is null for plain least squares, otherwise the per-mode inverse
// covariances of the non-updated modes.  The vertical stacks share
// their memory with a d_k x (n * cols) view (column-major blocks line
// up), so Gram and cross moments are single matrix products.
void sweep_blocks(TenArModel& model, std::vector<DenseTensor>& resid,
                  const LagStacks& stacks,
                  const std::vector<Matrix>* sinv_per_mode,
                  double ridge, const char* who) {
  const ModelSpec& spec = model.spec;
  const Index K = spec.mode_count();
  const Index n = static_cast<Index>(resid.size());
  const Index d = spec.vec_dim();
  const auto pos = unfold_positions(spec.dims);
  Matrix wv, wsv, rv, u;
  for (Index i = 0; i < spec.order(); ++i) {
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r) {
      for (Index k = 0; k < K; ++k) {
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        const Index cols = d / dk;
        const auto& pk = pos[static_cast<std::size_t>(k)];
        const Matrix phik =
            K == 1 ? Matrix::Identity(1, 1)
                   : kron_chain_skip(model.coeffs[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(r)], k);
        const Matrix& a_old = model.coeff(i, r, k);
        const Matrix& xs =
            stacks[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        wv.noalias() = xs * phik.transpose();
        rv.resize(dk * n, cols);
        for (Index c = 0; c < cols; ++c)
          for (Index j = 0; j < n; ++j) {
            const Vector& v = resid[static_cast<std::size_t>(j)].vec();
            for (Index ii = 0; ii < dk; ++ii)
              rv(j * dk + ii, c) = v[pk[static_cast<std::size_t>(ii + dk * c)]];
          }
        Eigen::Map<const Matrix> hw(wv.data(), dk, n * cols);
        Eigen::Map<const Matrix> hr(rv.data(), dk, n * cols);
        Matrix gram(dk, dk), cross(dk, dk);
        if (sinv_per_mode) {
          wsv.noalias() = wv * (*sinv_per_mode)[static_cast<std::size_t>(k)];
          Eigen::Map<const Matrix> hws(wsv.data(), dk, n * cols);
          gram.noalias() = hw * hws.transpose();
          cross.noalias() = hr * hws.transpose() + a_old * gram;
        } else {
          gram.noalias() = hw * hw.transpose();
          cross.noalias() = hr * hw.transpose() + a_old * gram;
        }
        gram.diagonal().array() += ridge_for(gram, ridge);
        const Matrix a_new = solve_block(gram, cross, who);
        const Matrix delta = a_new - a_old;
        if (delta.cwiseAbs().maxCoeff() > 0.0) {
          u.noalias() = delta * hw;
          for (Index c = 0; c < cols; ++c)
            for (Index j = 0; j < n; ++j) {
              Vector& v = resid[static_cast<std::size_t>(j)].vec();
              for (Index ii = 0; ii < dk; ++ii)
                v[pk[static_cast<std::size_t>(ii + dk * c)]] -=
                    u(ii, c * n + j);
            }
        }
        model.coeff(i, r, k) = a_new;
      }
    }
  }
}

}  // namespace

double loglik(const TensorSeries& s, const TenArModel& m, Index t_start) {
  m.validate();
  s.validate();
  if (s.dims != m.spec.dims)
    throw InvalidInput("loglik: series dims do not match model");
  const Index t0 = resolve_t_start(s.length(), m.spec.order(), t_start, "loglik");
  const std::vector<Matrix> factors = noise_factors_for_loglik(m);
  const SepCovOps ops = factor_ops(factors);
  const std::vector<DenseTensor> resid = residuals_over(m, s, t0);
  return loglik_from_parts(ops, resid, m.spec.dims);
}

FitReport fit_lse(const TensorSeries& s, const ModelSpec& spec,
                  const FitOptions& opts) {
  spec.validate();
  s.validate();
  if (s.dims != spec.dims)
    throw InvalidInput("fit_lse: series dims do not match spec");
  const Index T = s.length();
  const Index t0 = resolve_t_start(T, spec.order(), opts.t_start, "fit_lse");
  const Index n = T - t0;
  const Index d = spec.vec_dim();

  FitReport report;
  report.n_eff = n;
  TenArModel model = initial_model(s, spec, opts, false, "fit_lse");
  const LagStacks stacks = stack_lags(s, spec, t0);

  std::vector<DenseTensor> resid;
  recompute_residuals(model, s, t0, stacks, resid);
  double data_scale = 0.0;
  for (Index t = t0; t < T; ++t)
    data_scale += s.obs[static_cast<std::size_t>(t)].vec().squaredNorm();
  const double floor = std::max(data_scale, 1.0) * 1e-13;

  double sse_prev = sse_of(resid);
  report.objective_trace.push_back(sse_prev);
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    sweep_blocks(model, resid, stacks, nullptr, opts.ridge, "fit_lse");
    recompute_residuals(model, s, t0, stacks, resid);
    const double sse = sse_of(resid);
    report.objective_trace.push_back(sse);
    report.sweeps = sweep;
    // Below the exact-fit floor the objective is dominated by ridge
    // and roundoff noise, so only increases past the floor count as
    // divergence.
    if (sse > std::max(sse_prev * (1.0 + 1e-10), floor))
      throw NumericalError("fit_lse: objective increased; fit diverged");
    if (std::abs(sse_prev - sse) <= opts.rel_tol * std::max(sse, floor)) {
      report.converged = true;
      sse_prev = sse;
      break;
    }
    sse_prev = sse;
  }
  report.sse = sse_prev;
  report.residual_cov = sample_cov(resid, d);
  model.noise = NoiseSpec::make_dense(report.residual_cov);
  report.model = normalize(model);
  return report;
}

FitReport fit_mle(const TensorSeries& s, const ModelSpec& spec,
                  const FitOptions& opts) {
  spec.validate();
  s.validate();
  if (s.dims != spec.dims)
    throw InvalidInput("fit_mle: series dims do not match spec");
  const Index T = s.length();
  const Index t0 = resolve_t_start(T, spec.order(), opts.t_start, "fit_mle");
  const Index n = T - t0;
  const Index K = spec.mode_count();
  const Index d = spec.vec_dim();

  FitReport report;
  report.n_eff = n;
  TenArModel model = initial_model(s, spec, opts, true, "fit_mle");
  std::vector<Matrix> sigma = noise_factors_for_loglik(model);
  const LagStacks stacks = stack_lags(s, spec, t0);

  std::vector<DenseTensor> resid;
  recompute_residuals(model, s, t0, stacks, resid);
  SepCovOps ops = factor_ops(sigma);
  double ll_prev = loglik_from_parts(ops, resid, spec.dims);
  report.objective_trace.push_back(ll_prev);

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    // Coefficient phase: generalized least squares against the
    // Kronecker product of the other modes' covariance inverses.
    std::vector<Matrix> sinv_per_mode;
    sinv_per_mode.reserve(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k)
      sinv_per_mode.push_back(K == 1 ? Matrix::Identity(1, 1)
                                     : kron_chain_skip(ops.inv, k));
    sweep_blocks(model, resid, stacks, &sinv_per_mode, opts.ridge, "fit_mle");

    // Covariance phase: each factor in turn has a closed-form update
    // given the others and the residuals.
    for (Index k = 0; k < K; ++k) {
      const Index dk = spec.dims[static_cast<std::size_t>(k)];
      const Matrix sk_inv =
          K == 1 ? Matrix::Identity(1, 1) : kron_chain_skip(ops.inv, k);
      Matrix acc = Matrix::Zero(dk, dk);
      for (const DenseTensor& r : resid) {
        const Matrix rk = matricize(r, k);
        acc.noalias() += rk * sk_inv * rk.transpose();
      }
      sigma[static_cast<std::size_t>(k)] =
          0.5 * (acc + acc.transpose()) /
          (static_cast<double>(n) * static_cast<double>(d / dk));
      ops = factor_ops(sigma);
    }
    sigma = NoiseSpec::separable(std::move(sigma)).factors;
    ops = factor_ops(sigma);

    recompute_residuals(model, s, t0, stacks, resid);
    const double ll = loglik_from_parts(ops, resid, spec.dims);
    report.objective_trace.push_back(ll);
    report.sweeps = sweep;
    if (ll < ll_prev - 1e-10 * std::max(std::abs(ll_prev), 1.0))
      throw NumericalError("fit_mle: log-likelihood decreased; fit diverged");
    if (std::abs(ll - ll_prev) <= opts.rel_tol * std::max(std::abs(ll), 1.0)) {
      report.converged = true;
      ll_prev = ll;
      break;
    }
    ll_prev = ll;
  }
  model.noise = NoiseSpec::separable(sigma);
  report.sse = sse_of(resid);
  report.residual_cov = sample_cov(resid, d);
  report.model = normalize(model);
  return report;
}

}  // namespace tenar
