#pragma once

#include <span>

#include "tenar/types.hpp"

namespace tenar {

/// Dense real tensor of arbitrary order.  Storage is the canonical
/// vectorization: the flat offset of entry (i_1, ..., i_K), all
/// 0-based, is i_1 + i_2*d_1 + i_3*d_1*d_2 + ...  The first index runs
/// fastest, so vec() of an order-2 tensor coincides with column-major
/// matrix storage.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(Dims dims)
      : dims_(std::move(dims)), data_(Vector::Zero(product(dims_))) {
    check_dims();
  }

  DenseTensor(Dims dims, Vector data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != product(dims_))
      throw InvalidInput("tensor data length does not match dims");
  }

  Index order() const { return static_cast<Index>(dims_.size()); }
  const Dims& dims() const { return dims_; }
  Index size() const { return data_.size(); }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }

  double operator()(std::span<const Index> idx) const {
    return data_[offset(idx)];
  }
  double& operator()(std::span<const Index> idx) {
    return data_[offset(idx)];
  }
  double at(std::initializer_list<Index> idx) const {
    return (*this)(std::span<const Index>(idx.begin(), idx.size()));
  }
  double& at(std::initializer_list<Index> idx) {
    return (*this)(std::span<const Index>(idx.begin(), idx.size()));
  }

  double norm() const { return data_.norm(); }

  Index offset(std::span<const Index> idx) const {
    if (static_cast<Index>(idx.size()) != order())
      throw InvalidInput("tensor index has wrong length");
    Index off = 0, stride = 1;
    for (Index k = 0; k < order(); ++k) {
      if (idx[k] < 0 || idx[k] >= dims_[k])
        throw InvalidInput("tensor index out of range");
      off += idx[k] * stride;
      stride *= dims_[k];
    }
    return off;
  }

 private:
  void check_dims() const {
    for (Index d : dims_)
      if (d < 1) throw InvalidInput("tensor dims must be positive");
  }

  Dims dims_;
  Vector data_;
};

/// Mode-k unfolding (0-based mode).  Row index is i_k; the column index
/// collects the remaining indices in their original order, first one
/// fastest.  For an order-2 tensor, matricize(x, 0) is the matrix
/// itself and matricize(x, 1) its transpose.
Matrix matricize(const DenseTensor& x, Index mode);

/// Inverse of matricize: folds a d_k x (prod of other dims) matrix back
/// into a tensor with the given dims.
DenseTensor fold(const Matrix& m, const Dims& dims, Index mode);

/// Mode-k product x ×_k a: contracts a (rows x d_k) against the k-th
/// index, so matricize(result, k) == a * matricize(x, k).
DenseTensor mode_product(const DenseTensor& x, const Matrix& a, Index mode);

Matrix kron(const Matrix& a, const Matrix& b);

/// Kronecker chain mats[K-1] ⊗ ... ⊗ mats[0].  The first factor acts on
/// the fastest-running index, matching the canonical vectorization:
/// vec(x ×_1 A_1 ... ×_K A_K) = kron_chain({A_1,...,A_K}) * vec(x).
Matrix kron_chain(std::span<const Matrix> mats);

/// Same chain with mats[skip] left out; identity of size 1 when only
/// one factor remains.
Matrix kron_chain_skip(std::span<const Matrix> mats, Index skip);

/// Rank-one tensor u_1 ∘ u_2 ∘ ... ∘ u_K with entries prod_k u_k[i_k].
DenseTensor outer(std::span<const Vector> factors);

}  // namespace tenar
