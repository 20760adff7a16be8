#pragma once

#include "tenar/tensor.hpp"
#include "tenar/types.hpp"

namespace tenar {

/// Permutation of flat vectors stored as an index map:
/// apply(v)[i] = v[source(i)].  Dense materialization is provided for
/// testing and debugging; production code applies the map directly.
class PermMap {
 public:
  PermMap() = default;
  explicit PermMap(std::vector<Index> source_of_dest);

  Index size() const { return static_cast<Index>(src_.size()); }
  Index source(Index dest) const { return src_[static_cast<std::size_t>(dest)]; }

  Vector apply(const Vector& v) const;
  [[nodiscard]] PermMap inverse() const;
  [[nodiscard]] Matrix dense() const;

 private:
  std::vector<Index> src_;
};

/// Commutation matrix P_{m,n} of size mn x mn: P_{m,n} vec(M) = vec(M')
/// for M of shape n x m.
PermMap perm_p(Index m, Index n);

/// Mode-k vectorization permutation Q_k (0-based mode):
/// Q_k vec(x) = vec(matricize(x, k)).  Q_0 is the identity.
PermMap perm_q(Index mode, const Dims& dims);

/// Rearrangement of a d x d matrix (d = prod dims) into an order-K
/// tensor with extents (d_1^2, ..., d_K^2).  Characterizing property:
/// rearrange_phi(kron_chain({A_1,...,A_K}), dims) is the rank-one
/// tensor vec(A_1) ∘ vec(A_2) ∘ ... ∘ vec(A_K).
DenseTensor rearrange_phi(const Matrix& phi, const Dims& dims);

/// Inverse rearrangement; rearrange_phi_inv(rearrange_phi(M)) == M.
Matrix rearrange_phi_inv(const DenseTensor& g, const Dims& dims);

}  // namespace tenar
