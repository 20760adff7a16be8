#include "tenar/inference.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "tenar/permutation.hpp"
#include "tenar/simulate.hpp"
#include "tenar/tensor.hpp"

namespace tenar {

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw InvalidInput("normal_quantile: probability must lie in (0, 1)");
  // Acklam's rational approximation with the usual three regions.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, x;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  // One Halley refinement step sharpens the tail accuracy.
  const double e =
      0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) *
                   std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

Index stacked_param_count(const ModelSpec& spec) {
  Index sq = 0;
  for (Index dk : spec.dims) sq += dk * dk;
  Index q = 0;
  for (int r : spec.kranks) q += static_cast<Index>(r) * sq;
  return q;
}

Vector stacked_params(const TenArModel& m) {
  Vector theta(stacked_param_count(m.spec));
  Index off = 0;
  for (Index i = 0; i < m.spec.order(); ++i)
    for (Index r = 0; r < m.spec.kranks[static_cast<std::size_t>(i)]; ++r)
      for (Index k = 0; k < m.spec.mode_count(); ++k) {
        const Matrix& a = m.coeff(i, r, k);
        theta.segment(off, a.size()) = Eigen::Map<const Vector>(a.data(), a.size());
        off += a.size();
      }
  return theta;
}

Matrix build_w(const TenArModel& m, std::span<const DenseTensor> window) {
  const ModelSpec& spec = m.spec;
  if (static_cast<Index>(window.size()) < spec.order())
    throw InvalidInput("build_w: window shorter than model order");
  const Index K = spec.mode_count();
  const Index d = spec.vec_dim();
  Matrix w(stacked_param_count(spec), d);
  Index off = 0;
  for (Index i = 0; i < spec.order(); ++i) {
    const DenseTensor& x = window[static_cast<std::size_t>(i)];
    if (x.dims() != spec.dims)
      throw InvalidInput("build_w: window dims do not match model");
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r) {
      for (Index k = 0; k < K; ++k) {
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        const Matrix phik =
            K == 1 ? Matrix::Identity(1, 1)
                   : kron_chain_skip(m.coeffs[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(r)], k);
        const Matrix mk = matricize(x, k) * phik.transpose();  // d_k x d/d_k
        const Matrix block = kron(mk, Matrix::Identity(dk, dk));
        // Right-multiplying by Q_k permutes columns: column c of the
        // product is column (index of vec slot c under Q_k) of block.
        const PermMap qk = perm_q(k, spec.dims);
        const PermMap qinv = qk.inverse();
        for (Index col = 0; col < d; ++col)
          w.block(off, col, dk * dk, 1) = block.col(qinv.source(col));
        off += dk * dk;
      }
    }
  }
  return w;
}

AsymptoticInference asymp_cov(const TensorSeries& s, const TenArModel& m,
                              EstimatorKind kind, Index t_start) {
  m.validate();
  s.validate();
  if (s.dims != m.spec.dims)
    throw InvalidInput("asymp_cov: series dims do not match model");
  const Index p = m.spec.order();
  const Index T = s.length();
  const Index t0 = t_start < 0 ? p : t_start;
  if (t0 < p) throw InvalidInput("asymp_cov: window starts before lag depth");
  if (T - t0 < 1) throw InvalidInput("asymp_cov: series too short");
  const Index n = T - t0;
  const Index d = m.spec.vec_dim();
  const Index K = m.spec.mode_count();
  const Index q = stacked_param_count(m.spec);

  Matrix sigma;
  Matrix sigma_inv;
  if (kind == EstimatorKind::MaximumLikelihood) {
    if (m.noise.kind != NoiseKind::Separable)
      throw InvalidInput("asymp_cov: likelihood inference requires separable noise");
    sigma = m.noise.full_cov(m.spec.dims);
    std::vector<Matrix> inv;
    for (const Matrix& f : m.noise.factors) {
      Eigen::LLT<Matrix> llt(f);
      if (llt.info() != Eigen::Success)
        throw NumericalError("asymp_cov: covariance factor not positive definite");
      inv.push_back(llt.solve(Matrix::Identity(f.rows(), f.rows())));
    }
    sigma_inv = kron_chain(inv);
  } else {
    // Sample residual covariance of the model on this series.
    Matrix cov = Matrix::Zero(d, d);
    std::vector<DenseTensor> win(static_cast<std::size_t>(p),
                                 DenseTensor(m.spec.dims));
    for (Index t = t0; t < T; ++t) {
      for (Index i = 0; i < p; ++i)
        win[static_cast<std::size_t>(i)] = s.obs[static_cast<std::size_t>(t - 1 - i)];
      Vector r = s.obs[static_cast<std::size_t>(t)].vec() -
                 predict_one(m, win).vec();
      cov.noalias() += r * r.transpose();
    }
    sigma = cov / static_cast<double>(n);
  }

  Matrix h = Matrix::Zero(q, q);
  Matrix mid = Matrix::Zero(q, q);
  std::vector<DenseTensor> win(static_cast<std::size_t>(p),
                               DenseTensor(m.spec.dims));
  for (Index t = t0; t < T; ++t) {
    for (Index i = 0; i < p; ++i)
      win[static_cast<std::size_t>(i)] = s.obs[static_cast<std::size_t>(t - 1 - i)];
    const Matrix wt = build_w(m, win);
    if (kind == EstimatorKind::MaximumLikelihood) {
      h.noalias() += wt * sigma_inv * wt.transpose();
    } else {
      h.noalias() += wt * wt.transpose();
      mid.noalias() += wt * sigma * wt.transpose();
    }
  }
  h /= static_cast<double>(n);
  if (kind == EstimatorKind::MaximumLikelihood)
    mid = h;
  else
    mid /= static_cast<double>(n);

  // Curvature augmentation for the unit-norm identification of the
  // leading K-1 factors of every term: add the outer product of each
  // constrained factor's zero-padded stacked vector.
  Index off = 0;
  for (Index i = 0; i < p; ++i)
    for (Index r = 0; r < m.spec.kranks[static_cast<std::size_t>(i)]; ++r)
      for (Index k = 0; k < K; ++k) {
        const Matrix& a = m.coeff(i, r, k);
        if (k < K - 1) {
          const auto va = Eigen::Map<const Vector>(a.data(), a.size());
          h.block(off, off, a.size(), a.size()).noalias() +=
              va * va.transpose();
        }
        off += a.size();
      }

  Eigen::LDLT<Matrix> ldlt(h);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("asymp_cov: curvature matrix factorization failed");
  const Matrix hinv = ldlt.solve(Matrix::Identity(q, q));
  if ((h * hinv - Matrix::Identity(q, q)).cwiseAbs().maxCoeff() > 1e-6)
    throw NumericalError("asymp_cov: curvature matrix is singular");

  AsymptoticInference out;
  out.kind = kind;
  out.n_eff = n;
  out.xi = hinv * mid * hinv;
  out.xi = 0.5 * (out.xi + out.xi.transpose()).eval();
  out.se = (out.xi.diagonal().cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return out;
}

std::vector<ConfInterval> conf_intervals(const TenArModel& m,
                                         const AsymptoticInference& inf,
                                         double level) {
  if (!(level > 0.0) || !(level < 1.0))
    throw InvalidInput("conf_intervals: level must lie in (0, 1)");
  const Vector theta = stacked_params(m);
  if (theta.size() != inf.se.size())
    throw InvalidInput("conf_intervals: model does not match inference result");
  const double z = normal_quantile(0.5 + level / 2.0);
  std::vector<ConfInterval> out;
  out.reserve(static_cast<std::size_t>(theta.size()));
  for (Index j = 0; j < theta.size(); ++j)
    out.push_back({theta[j], theta[j] - z * inf.se[j],
                   theta[j] + z * inf.se[j], inf.se[j]});
  return out;
}

}  // namespace tenar
