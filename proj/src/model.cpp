#include "tenar/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "tenar/spectral.hpp"

namespace tenar {

namespace {

constexpr double kSignEps = 1e-10;
constexpr double kCausalMargin = 1e-10;

void check_sym_psd(const Matrix& s, const std::string& label) {
  if (s.rows() != s.cols()) throw InvalidInput(label + ": not square");
  const double scale = std::max(s.cwiseAbs().maxCoeff(), 1.0);
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InvalidInput(label + ": not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericalError(label + ": eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw InvalidInput(label + ": not positive semidefinite");
}

}  // namespace

int ModelSpec::total_terms() const {
  int n = 0;
  for (int r : kranks) n += r;
  return n;
}

void ModelSpec::validate() const {
  if (dims.empty()) throw InvalidInput("model spec: no modes");
  for (Index d : dims)
    if (d < 1) throw InvalidInput("model spec: mode extents must be positive");
  if (kranks.empty()) throw InvalidInput("model spec: order must be at least 1");
  for (int r : kranks)
    if (r < 0) throw InvalidInput("model spec: ranks must be nonnegative");
  if (total_terms() < 1)
    throw InvalidInput("model spec: at least one term required");
}

ModelSpec ModelSpec::canonical() const {
  ModelSpec out = *this;
  while (!out.kranks.empty() && out.kranks.back() == 0) out.kranks.pop_back();
  return out;
}

NoiseSpec NoiseSpec::identity() { return NoiseSpec{}; }

NoiseSpec NoiseSpec::make_dense(Matrix sigma) {
  NoiseSpec n;
  n.kind = NoiseKind::Dense;
  n.dense = std::move(sigma);
  return n;
}

NoiseSpec NoiseSpec::separable(std::vector<Matrix> factors) {
  if (factors.empty()) throw InvalidInput("separable noise: no factors");
  NoiseSpec n;
  n.kind = NoiseKind::Separable;
  n.factors = std::move(factors);
  const std::size_t K = n.factors.size();
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double s = n.factors[k].norm();
    if (s == 0.0) throw InvalidInput("separable noise: zero factor");
    n.factors[k] /= s;
    n.factors[K - 1] *= s;
  }
  return n;
}

Matrix NoiseSpec::full_cov(const Dims& dims) const {
  const Index d = product(dims);
  switch (kind) {
    case NoiseKind::Identity:
      return Matrix::Identity(d, d);
    case NoiseKind::Dense:
      return dense;
    case NoiseKind::Separable:
      return kron_chain(factors);
  }
  throw InvalidInput("noise spec: unknown kind");
}

void NoiseSpec::validate(const Dims& dims) const {
  const Index d = product(dims);
  switch (kind) {
    case NoiseKind::Identity:
      return;
    case NoiseKind::Dense:
      if (dense.rows() != d || dense.cols() != d)
        throw InvalidInput("dense noise: shape does not match model dims");
      check_sym_psd(dense, "dense noise");
      return;
    case NoiseKind::Separable: {
      if (factors.size() != dims.size())
        throw InvalidInput("separable noise: one factor per mode required");
      for (std::size_t k = 0; k < factors.size(); ++k) {
        const Index dk = dims[k];
        if (factors[k].rows() != dk || factors[k].cols() != dk)
          throw InvalidInput("separable noise: factor shape mismatch");
        check_sym_psd(factors[k], "separable noise factor");
      }
      for (std::size_t k = 0; k + 1 < factors.size(); ++k)
        if (std::abs(factors[k].norm() - 1.0) > 1e-8)
          throw InvalidInput(
              "separable noise: leading factors must have unit Frobenius norm");
      return;
    }
  }
  throw InvalidInput("noise spec: unknown kind");
}

void TenArModel::validate() const {
  spec.validate();
  if (coeffs.size() != static_cast<std::size_t>(spec.order()))
    throw InvalidInput("model: coefficient lags do not match spec order");
  for (Index i = 0; i < spec.order(); ++i) {
    const auto& lag = coeffs[static_cast<std::size_t>(i)];
    if (lag.size() != static_cast<std::size_t>(spec.kranks[static_cast<std::size_t>(i)]))
      throw InvalidInput("model: term count does not match spec rank");
    for (const auto& term : lag) {
      if (term.size() != static_cast<std::size_t>(spec.mode_count()))
        throw InvalidInput("model: factor count does not match mode count");
      for (Index k = 0; k < spec.mode_count(); ++k) {
        const Matrix& a = term[static_cast<std::size_t>(k)];
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        if (a.rows() != dk || a.cols() != dk)
          throw InvalidInput("model: factor shape does not match mode extent");
      }
    }
  }
  noise.validate(spec.dims);
}

TenArModel zero_model(const ModelSpec& spec) {
  spec.validate();
  TenArModel m;
  m.spec = spec;
  m.coeffs.resize(static_cast<std::size_t>(spec.order()));
  for (Index i = 0; i < spec.order(); ++i) {
    auto& lag = m.coeffs[static_cast<std::size_t>(i)];
    lag.resize(static_cast<std::size_t>(spec.kranks[static_cast<std::size_t>(i)]));
    for (auto& term : lag) {
      term.reserve(static_cast<std::size_t>(spec.mode_count()));
      for (Index k = 0; k < spec.mode_count(); ++k) {
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        term.push_back(Matrix::Zero(dk, dk));
      }
    }
  }
  return m;
}

std::vector<Matrix> var_coefficients(const TenArModel& m) {
  const Index d = m.spec.vec_dim();
  std::vector<Matrix> phis;
  phis.reserve(static_cast<std::size_t>(m.spec.order()));
  for (Index i = 0; i < m.spec.order(); ++i) {
    Matrix phi = Matrix::Zero(d, d);
    for (const auto& term : m.coeffs[static_cast<std::size_t>(i)])
      phi += kron_chain(term);
    phis.push_back(std::move(phi));
  }
  return phis;
}

Matrix companion_matrix(std::span<const Matrix> phis) {
  if (phis.empty()) throw InvalidInput("companion_matrix: no coefficients");
  const Index d = phis[0].rows();
  const Index p = static_cast<Index>(phis.size());
  for (const Matrix& phi : phis)
    if (phi.rows() != d || phi.cols() != d)
      throw InvalidInput("companion_matrix: coefficient shapes differ");
  if (p == 1) return phis[0];
  Matrix c = Matrix::Zero(p * d, p * d);
  for (Index i = 0; i < p; ++i) c.block(0, i * d, d, d) = phis[static_cast<std::size_t>(i)];
  c.block(d, 0, (p - 1) * d, (p - 1) * d) =
      Matrix::Identity((p - 1) * d, (p - 1) * d);
  return c;
}

CausalReport causal(const TenArModel& m) {
  const std::vector<Matrix> phis = var_coefficients(m);
  const SpectralRadius sr = spectral_radius(companion_matrix(phis));
  return {sr.value < 1.0 - kCausalMargin, sr.value, sr.converged};
}

TenArModel normalize(const TenArModel& m) {
  m.validate();
  TenArModel out = m;
  const Index K = out.spec.mode_count();
  for (Index i = 0; i < out.spec.order(); ++i) {
    auto& lag = out.coeffs[static_cast<std::size_t>(i)];
    for (auto& term : lag) {
      Matrix& last = term[static_cast<std::size_t>(K - 1)];
      for (Index k = 0; k < K - 1; ++k) {
        Matrix& a = term[static_cast<std::size_t>(k)];
        const double s = a.norm();
        if (s == 0.0) throw InvalidInput("normalize: zero coefficient factor");
        a /= s;
        last *= s;
        // Sign: first entry of vec(A_k) exceeding the threshold in
        // magnitude must be positive.  A unit-norm matrix always has
        // such an entry.
        const double* v = a.data();
        for (Index j = 0; j < a.size(); ++j) {
          if (std::abs(v[j]) > kSignEps) {
            if (v[j] < 0.0) {
              a = -a;
              last = -last;
            }
            break;
          }
        }
      }
      if (last.norm() == 0.0)
        throw InvalidInput("normalize: zero coefficient factor");
    }
    std::stable_sort(lag.begin(), lag.end(), [K](const auto& a, const auto& b) {
      return a[static_cast<std::size_t>(K - 1)].norm() >
             b[static_cast<std::size_t>(K - 1)].norm();
    });
  }
  return out;
}

IdentifiabilityReport identifiability_check(const TenArModel& m) {
  m.validate();
  const Index K = m.spec.mode_count();
  IdentifiabilityReport report;
  report.holds = true;
  for (Index i = 0; i < m.spec.order(); ++i) {
    const auto& lag = m.coeffs[static_cast<std::size_t>(i)];
    const Index R = static_cast<Index>(lag.size());
    LagIdentifiability li;
    li.holds = true;
    if (R == 0) {
      report.lags.push_back(li);
      continue;
    }
    for (Index k = 0; k < K; ++k) {
      const Index dk = m.spec.dims[static_cast<std::size_t>(k)];
      Matrix stack(dk * dk, R);
      for (Index r = 0; r < R; ++r) {
        const Matrix& a = lag[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
        stack.col(r) = Eigen::Map<const Vector>(a.data(), a.size());
      }
      Eigen::JacobiSVD<Matrix> svd(stack);
      const double smax = svd.singularValues()[0];
      Index rank = 0;
      for (Index j = 0; j < svd.singularValues().size(); ++j)
        if (svd.singularValues()[j] > 1e-8 * std::max(smax, 1e-300)) ++rank;
      li.factor_ranks.push_back(rank);
      if (rank < R) li.holds = false;
      if (K == 2) {
        for (Index r = 0; r < R; ++r)
          for (Index l = r + 1; l < R; ++l)
            li.orthogonality_residual =
                std::max(li.orthogonality_residual,
                         std::abs(stack.col(r).dot(stack.col(l))) /
                             (stack.col(r).norm() * stack.col(l).norm()));
      }
    }
    if (K == 2 && li.orthogonality_residual > 1e-8) li.holds = false;
    report.holds = report.holds && li.holds;
    report.lags.push_back(std::move(li));
  }
  return report;
}

}  // namespace tenar
