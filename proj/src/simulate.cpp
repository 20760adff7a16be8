#include "tenar/simulate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>

#include "tenar/rng.hpp"
#include "tenar/spectral.hpp"

namespace tenar {

namespace {

// Random covariance: Q diag(|z|) Q' with Q Haar-distributed.  Q comes
// from the QR factorization of a Gaussian matrix with the R diagonal
// signs absorbed into Q, which makes the distribution exactly
// rotation-invariant rather than merely approximately so.
Matrix random_cov(Index d, Rng& rng) {
  Matrix g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  Vector lambda(d);
  for (Index j = 0; j < d; ++j) lambda[j] = std::abs(rng.normal());
  return q * lambda.asDiagonal() * q.transpose();
}

// Symmetric PSD square root; negative eigenvalues (roundoff) clamp to
// zero.
Matrix psd_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success)
    throw NumericalError("covariance square root failed");
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double radius_with_scale(const std::vector<Matrix>& base_phis, double c) {
  std::vector<Matrix> scaled;
  scaled.reserve(base_phis.size());
  for (const Matrix& phi : base_phis) scaled.push_back(c * phi);
  return spectral_radius(companion_matrix(scaled)).value;
}

}  // namespace

NoiseSpec noise_cov(NoiseSetting setting, const Dims& dims, std::uint64_t seed) {
  for (Index d : dims)
    if (d < 1) throw InvalidInput("noise_cov: mode extents must be positive");
  Rng root(seed);
  switch (setting) {
    case NoiseSetting::Identity:
      return NoiseSpec::identity();
    case NoiseSetting::RandomDense: {
      Rng rng = root.stream(0);
      return NoiseSpec::make_dense(random_cov(product(dims), rng));
    }
    case NoiseSetting::RandomSeparable: {
      std::vector<Matrix> factors;
      for (std::size_t k = 0; k < dims.size(); ++k) {
        Rng rng = root.stream(k);
        factors.push_back(random_cov(dims[k], rng));
      }
      return NoiseSpec::separable(std::move(factors));
    }
  }
  throw InvalidInput("noise_cov: unknown setting");
}

TenArModel random_model(const ModelSpec& spec, double rho, std::uint64_t seed) {
  spec.validate();
  if (!(rho > 0.0) || rho >= 1.0)
    throw InvalidInput("random_model: rho must lie in (0, 1)");
  Rng root(seed);
  TenArModel m = zero_model(spec);
  std::uint64_t stream = 0;
  for (Index i = 0; i < spec.order(); ++i)
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r)
      for (Index k = 0; k < spec.mode_count(); ++k) {
        Rng rng = root.stream(stream++);
        const Index dk = spec.dims[static_cast<std::size_t>(k)];
        Matrix a = rng.normal_matrix(dk, dk);
        for (int attempt = 0; a.norm() == 0.0; ++attempt) {
          if (attempt >= 10)
            throw NumericalError("random_model: repeated degenerate factor draw");
          a = rng.normal_matrix(dk, dk);
        }
        m.coeff(i, r, k) = a;
      }
  m = normalize(m);

  // Scale all last-mode factors by one common c so the companion
  // radius hits rho.  The radius is continuous in c and zero at c = 0,
  // so bracket by doubling and bisect.
  const std::vector<Matrix> base = var_coefficients(m);
  double hi = 1.0;
  int guard = 0;
  while (radius_with_scale(base, hi) < rho) {
    hi *= 2.0;
    if (++guard > 200)
      throw NumericalError("random_model: failed to bracket target radius");
  }
  double lo = 0.0;
  double c = hi, r_at_c = radius_with_scale(base, c);
  for (int it = 0; it < 200 && std::abs(r_at_c - rho) > 1e-6; ++it) {
    c = 0.5 * (lo + hi);
    r_at_c = radius_with_scale(base, c);
    (r_at_c < rho ? lo : hi) = c;
  }
  if (std::abs(r_at_c - rho) > 1e-6)
    throw NumericalError("random_model: radius bisection did not converge");
  const Index K = spec.mode_count();
  for (Index i = 0; i < spec.order(); ++i)
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r)
      m.coeff(i, r, K - 1) *= c;
  return m;
}

DenseTensor predict_one(const TenArModel& m,
                        std::span<const DenseTensor> window) {
  if (static_cast<Index>(window.size()) < m.spec.order())
    throw InvalidInput("predict_one: window shorter than model order");
  DenseTensor pred(m.spec.dims);
  for (Index i = 0; i < m.spec.order(); ++i) {
    const DenseTensor& x = window[static_cast<std::size_t>(i)];
    if (x.dims() != m.spec.dims)
      throw InvalidInput("predict_one: window dims do not match model");
    for (const auto& term : m.coeffs[static_cast<std::size_t>(i)]) {
      DenseTensor acc = x;
      for (Index k = 0; k < m.spec.mode_count(); ++k)
        acc = mode_product(acc, term[static_cast<std::size_t>(k)], k);
      pred.vec() += acc.vec();
    }
  }
  return pred;
}

TensorSeries simulate_series(const TenArModel& m, Index T, std::uint64_t seed,
                             Index burn_in) {
  m.validate();
  if (T < 1) throw InvalidInput("simulate_series: T must be positive");
  if (burn_in < 0) throw InvalidInput("simulate_series: negative burn-in");
  const CausalReport cr = causal(m);
  if (!cr.causal)
    throw InvalidInput("simulate_series: model is not causal (radius " +
                       std::to_string(cr.radius) + ")");

  const Dims& dims = m.spec.dims;
  const Index d = m.spec.vec_dim();
  const Index p = m.spec.order();

  // Noise generator: one of three shapes, precomputed factorizations.
  Matrix chol_l;
  std::vector<Matrix> factor_sqrts;
  if (m.noise.kind == NoiseKind::Dense) {
    Eigen::LLT<Matrix> llt(m.noise.dense);
    if (llt.info() != Eigen::Success) {
      // PSD but singular covariances are legal; fall back to the
      // eigenvalue square root.
      chol_l = psd_sqrt(m.noise.dense);
    } else {
      chol_l = llt.matrixL();
    }
  } else if (m.noise.kind == NoiseKind::Separable) {
    for (const Matrix& f : m.noise.factors) factor_sqrts.push_back(psd_sqrt(f));
  }

  Rng rng = Rng(seed).stream(0xE5);
  auto draw_noise = [&]() {
    DenseTensor e(dims, rng.normal_vector(d));
    switch (m.noise.kind) {
      case NoiseKind::Identity:
        return e;
      case NoiseKind::Dense:
        return DenseTensor(dims, chol_l * e.vec());
      case NoiseKind::Separable: {
        DenseTensor acc = e;
        for (Index k = 0; k < m.spec.mode_count(); ++k)
          acc = mode_product(acc, factor_sqrts[static_cast<std::size_t>(k)], k);
        return acc;
      }
    }
    throw InvalidInput("simulate_series: unknown noise kind");
  };

  std::vector<DenseTensor> window(static_cast<std::size_t>(p),
                                  DenseTensor(dims));
  TensorSeries out;
  out.dims = dims;
  out.obs.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < burn_in + T; ++t) {
    DenseTensor x = predict_one(m, window);
    x.vec() += draw_noise().vec();
    for (std::size_t j = window.size(); j-- > 1;)
      window[j] = std::move(window[j - 1]);
    if (!window.empty()) window[0] = x;
    if (t >= burn_in) out.obs.push_back(std::move(x));
  }
  return out;
}

}  // namespace tenar
