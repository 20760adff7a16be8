#pragma once

#include <span>

#include "tenar/tensor.hpp"
#include "tenar/types.hpp"

namespace tenar {

/// Shape of an autoregressive tensor model: mode extents d_1..d_K and
/// per-lag Kronecker ranks R_1..R_p (the number of multilinear terms at
/// each lag).  Individual ranks may be zero; at least one must be
/// positive.
struct ModelSpec {
  Dims dims;
  std::vector<int> kranks;

  Index mode_count() const { return static_cast<Index>(dims.size()); }
  Index order() const { return static_cast<Index>(kranks.size()); }
  Index vec_dim() const { return product(dims); }
  int total_terms() const;

  void validate() const;

  /// Same spec with trailing zero ranks removed.  An all-zero spec
  /// trims to order zero, which validate() rejects; callers handle the
  /// white-noise case separately.
  [[nodiscard]] ModelSpec canonical() const;

  bool operator==(const ModelSpec&) const = default;
};

enum class NoiseKind { Identity, Dense, Separable };

/// Innovation covariance.  Identity needs no data; Dense stores the
/// full d x d matrix; Separable stores per-mode factors whose Kronecker
/// product (last mode slowest) is the full covariance.  Separable
/// factors follow the scale convention: unit Frobenius norm for all
/// but the last mode, overall scale carried by the last factor.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Identity;
  Matrix dense;
  std::vector<Matrix> factors;

  static NoiseSpec identity();
  static NoiseSpec make_dense(Matrix sigma);
  static NoiseSpec separable(std::vector<Matrix> factors);

  /// d x d covariance implied by the stored representation.
  Matrix full_cov(const Dims& dims) const;

  /// Checks symmetry and positive semidefiniteness (and, for
  /// Separable, shape agreement and the scale convention).
  void validate(const Dims& dims) const;
};

/// Autoregressive model for tensor-valued series: the prediction of
/// x_t sums, over lags i and terms r, the lag-i observation multiplied
/// in every mode k by the factor coeff(i, r, k).
///
/// Identification convention (established by normalize()): every
/// factor except the last mode has unit Frobenius norm and a positive
/// leading entry of its vectorization; scale and sign ride on the last
/// mode's factor; terms within a lag are ordered by descending
/// Frobenius norm of that last factor.
struct TenArModel {
  ModelSpec spec;
  /// coeffs[i][r][k], i < order, r < kranks[i], k < mode_count.
  std::vector<std::vector<std::vector<Matrix>>> coeffs;
  NoiseSpec noise;

  const Matrix& coeff(Index i, Index r, Index k) const {
    return coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]
                 [static_cast<std::size_t>(k)];
  }
  Matrix& coeff(Index i, Index r, Index k) {
    return coeffs[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]
                 [static_cast<std::size_t>(k)];
  }

  void validate() const;
};

/// Zero-initialized coefficient array matching the spec.
TenArModel zero_model(const ModelSpec& spec);

/// Lag-i coefficient of the equivalent vector autoregression:
/// Phi_i = sum_r kron_chain({A_1^{(ir)}, ..., A_K^{(ir)}}).
std::vector<Matrix> var_coefficients(const TenArModel& m);

/// Companion matrix of the VAR coefficients (block top row Phi_1..Phi_p,
/// shifted identity below); equals Phi_1 when p == 1.
Matrix companion_matrix(std::span<const Matrix> phis);

struct CausalReport {
  bool causal = false;
  double radius = 0.0;
  bool radius_converged = false;
};

/// Stationarity check: spectral radius of the companion matrix must
/// stay below one with margin 1e-10.
CausalReport causal(const TenArModel& m);

/// Rescales and reorders coefficients into the identification
/// convention without changing the VAR coefficients.  Rejects zero
/// factors.
TenArModel normalize(const TenArModel& m);

struct LagIdentifiability {
  std::vector<Index> factor_ranks;   // rank of the d_k^2 x R_i factor stack per mode
  double orthogonality_residual = 0.0;  // K == 2 only: max |<A_k^(r), A_k^(l)>|
  bool holds = false;
};

struct IdentifiabilityReport {
  std::vector<LagIdentifiability> lags;
  bool holds = false;
};

/// Diagnostic for uniqueness of the multilinear decomposition at each
/// lag.  For K >= 3 the sufficient condition is that stacking the
/// vectorized mode-k factors of all terms gives full column rank for
/// every mode.  For K == 2 the report adds the pairwise factor
/// orthogonality residual; the condition is flagged as holding when
/// factors within each mode are mutually orthogonal (distinct terms)
/// and the stacks have full rank.
IdentifiabilityReport identifiability_check(const TenArModel& m);

}  // namespace tenar
