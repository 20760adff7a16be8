#include "tenar/permutation.hpp"

namespace tenar {

PermMap::PermMap(std::vector<Index> source_of_dest)
    : src_(std::move(source_of_dest)) {
  std::vector<char> seen(src_.size(), 0);
  for (Index s : src_) {
    if (s < 0 || s >= size() || seen[static_cast<std::size_t>(s)])
      throw InvalidInput("index map is not a permutation");
    seen[static_cast<std::size_t>(s)] = 1;
  }
}

Vector PermMap::apply(const Vector& v) const {
  if (v.size() != size())
    throw InvalidInput("permutation size does not match vector");
  Vector out(size());
  for (Index i = 0; i < size(); ++i) out[i] = v[src_[static_cast<std::size_t>(i)]];
  return out;
}

PermMap PermMap::inverse() const {
  std::vector<Index> inv(src_.size());
  for (Index i = 0; i < size(); ++i)
    inv[static_cast<std::size_t>(src_[static_cast<std::size_t>(i)])] = i;
  return PermMap(std::move(inv));
}

Matrix PermMap::dense() const {
  Matrix m = Matrix::Zero(size(), size());
  for (Index i = 0; i < size(); ++i) m(i, src_[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

PermMap perm_p(Index m, Index n) {
  if (m < 1 || n < 1) throw InvalidInput("perm_p: sizes must be positive");
  std::vector<Index> src(static_cast<std::size_t>(m * n));
  // vec(M)[j*n + i] = M(i,j) for M n x m; dest slot (i,j) of vec(M').
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      src[static_cast<std::size_t>(i * m + j)] = j * n + i;
  return PermMap(std::move(src));
}

PermMap perm_q(Index mode, const Dims& dims) {
  if (mode < 0 || mode >= static_cast<Index>(dims.size()))
    throw InvalidInput("perm_q: mode out of range");
  Index inner = 1, outer = 1;
  const Index dk = dims[static_cast<std::size_t>(mode)];
  for (Index l = 0; l < mode; ++l) inner *= dims[static_cast<std::size_t>(l)];
  for (Index l = mode + 1; l < static_cast<Index>(dims.size()); ++l)
    outer *= dims[static_cast<std::size_t>(l)];
  std::vector<Index> src(static_cast<std::size_t>(inner * dk * outer));
  // Entry (i, o*inner + in) of the unfolding sits at column-major slot
  // i + (o*inner + in)*dk and comes from flat slot in + i*inner + o*inner*dk.
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < dk; ++i)
      for (Index in = 0; in < inner; ++in)
        src[static_cast<std::size_t>(i + (o * inner + in) * dk)] =
            in + i * inner + o * inner * dk;
  return PermMap(std::move(src));
}

namespace {

// Shared by both rearrangement directions: maps the flat (column-major)
// slot of a d x d matrix to the flat slot of the (d_1^2,...,d_K^2)
// tensor.  Row index alpha and column index beta decompose over the
// mode extents; the pair (i_k, j_k) forms the vec(A_k) coordinate
// m_k = i_k + j_k*d_k of the k-th axis.
std::vector<Index> rearrange_dest_of_src(const Dims& dims) {
  const Index d = product(dims);
  const Index K = static_cast<Index>(dims.size());
  std::vector<Index> dest(static_cast<std::size_t>(d * d));
  std::vector<Index> ai(static_cast<std::size_t>(K)), bi(static_cast<std::size_t>(K));
  for (Index beta = 0; beta < d; ++beta) {
    Index b = beta;
    for (Index k = 0; k < K; ++k) {
      bi[static_cast<std::size_t>(k)] = b % dims[static_cast<std::size_t>(k)];
      b /= dims[static_cast<std::size_t>(k)];
    }
    for (Index alpha = 0; alpha < d; ++alpha) {
      Index a = alpha;
      Index g = 0, stride = 1;
      for (Index k = 0; k < K; ++k) {
        const Index dk = dims[static_cast<std::size_t>(k)];
        ai[static_cast<std::size_t>(k)] = a % dk;
        a /= dk;
        const Index mk = ai[static_cast<std::size_t>(k)] +
                         bi[static_cast<std::size_t>(k)] * dk;
        g += mk * stride;
        stride *= dk * dk;
      }
      dest[static_cast<std::size_t>(alpha + beta * d)] = g;
    }
  }
  return dest;
}

}  // namespace

DenseTensor rearrange_phi(const Matrix& phi, const Dims& dims) {
  const Index d = product(dims);
  if (phi.rows() != d || phi.cols() != d)
    throw InvalidInput("rearrange_phi: matrix must be d x d with d = prod dims");
  const std::vector<Index> dest = rearrange_dest_of_src(dims);
  Dims sq;
  for (Index dk : dims) sq.push_back(dk * dk);
  DenseTensor out(sq);
  const double* src = phi.data();
  for (Index f = 0; f < d * d; ++f)
    out.vec()[dest[static_cast<std::size_t>(f)]] = src[f];
  return out;
}

Matrix rearrange_phi_inv(const DenseTensor& g, const Dims& dims) {
  const Index d = product(dims);
  if (g.order() != static_cast<Index>(dims.size()))
    throw InvalidInput("rearrange_phi_inv: tensor order does not match dims");
  for (Index k = 0; k < g.order(); ++k) {
    const Index dk = dims[static_cast<std::size_t>(k)];
    if (g.dims()[static_cast<std::size_t>(k)] != dk * dk)
      throw InvalidInput("rearrange_phi_inv: tensor extents must be squared dims");
  }
  const std::vector<Index> dest = rearrange_dest_of_src(dims);
  Matrix out(d, d);
  double* dst = out.data();
  for (Index f = 0; f < d * d; ++f)
    dst[f] = g.vec()[dest[static_cast<std::size_t>(f)]];
  return out;
}

}  // namespace tenar
