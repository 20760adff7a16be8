#include "tenar/tensor.hpp"

namespace tenar {

namespace {

void check_mode(const DenseTensor& x, Index mode) {
  if (mode < 0 || mode >= x.order())
    throw InvalidInput("mode out of range");
}

// Extent products below (inner) and above (outer) the chosen mode.
// With first-index-fastest storage every slice decomposes as
// flat = inner_idx + i_k*innerN + outer_idx*innerN*d_k.
struct ModeSplit {
  Index inner, dk, outer;
};

ModeSplit split(const Dims& dims, Index mode) {
  ModeSplit s{1, dims[static_cast<std::size_t>(mode)], 1};
  for (Index l = 0; l < mode; ++l) s.inner *= dims[static_cast<std::size_t>(l)];
  for (Index l = mode + 1; l < static_cast<Index>(dims.size()); ++l)
    s.outer *= dims[static_cast<std::size_t>(l)];
  return s;
}

}  // namespace

Matrix matricize(const DenseTensor& x, Index mode) {
  check_mode(x, mode);
  const ModeSplit s = split(x.dims(), mode);
  Matrix out(s.dk, s.inner * s.outer);
  const Vector& v = x.vec();
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.dk; ++i)
      out.row(i).segment(o * s.inner, s.inner) =
          v.segment(o * s.inner * s.dk + i * s.inner, s.inner);
  return out;
}

DenseTensor fold(const Matrix& m, const Dims& dims, Index mode) {
  if (mode < 0 || mode >= static_cast<Index>(dims.size()))
    throw InvalidInput("mode out of range");
  const ModeSplit s = split(dims, mode);
  if (m.rows() != s.dk || m.cols() != s.inner * s.outer)
    throw InvalidInput("matrix shape does not match fold target");
  DenseTensor out(dims);
  Vector& v = out.vec();
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.dk; ++i)
      v.segment(o * s.inner * s.dk + i * s.inner, s.inner) =
          m.row(i).segment(o * s.inner, s.inner);
  return out;
}

DenseTensor mode_product(const DenseTensor& x, const Matrix& a, Index mode) {
  check_mode(x, mode);
  if (a.cols() != x.dims()[static_cast<std::size_t>(mode)])
    throw InvalidInput("mode_product: matrix columns must match mode extent");
  Dims nd = x.dims();
  nd[static_cast<std::size_t>(mode)] = a.rows();
  return fold(a * matricize(x, mode), nd, mode);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix kron_chain(std::span<const Matrix> mats) {
  if (mats.empty()) throw InvalidInput("kron_chain: empty factor list");
  Matrix acc = mats[0];
  for (std::size_t k = 1; k < mats.size(); ++k) acc = kron(mats[k], acc);
  return acc;
}

Matrix kron_chain_skip(std::span<const Matrix> mats, Index skip) {
  if (skip < 0 || skip >= static_cast<Index>(mats.size()))
    throw InvalidInput("kron_chain_skip: skip index out of range");
  std::vector<Matrix> kept;
  for (std::size_t k = 0; k < mats.size(); ++k)
    if (static_cast<Index>(k) != skip) kept.push_back(mats[k]);
  if (kept.empty()) return Matrix::Identity(1, 1);
  return kron_chain(kept);
}

DenseTensor outer(std::span<const Vector> factors) {
  if (factors.empty()) throw InvalidInput("outer: empty factor list");
  Dims dims;
  for (const Vector& f : factors) dims.push_back(f.size());
  Vector v = factors[0];
  for (std::size_t k = 1; k < factors.size(); ++k) {
    Vector next(v.size() * factors[k].size());
    for (Index j = 0; j < factors[k].size(); ++j)
      next.segment(j * v.size(), v.size()) = factors[k][j] * v;
    v = std::move(next);
  }
  return DenseTensor(dims, std::move(v));
}

}  // namespace tenar
