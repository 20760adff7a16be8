#include <doctest.h>

#include "tenar/permutation.hpp"
#include "tenar/rng.hpp"
#include "tenar/spectral.hpp"
#include "tenar/tensor.hpp"

using namespace tenar;

namespace {

DenseTensor iota_tensor(const Dims& dims) {
  Vector v(product(dims));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i + 1);
  return DenseTensor(dims, std::move(v));
}

DenseTensor random_tensor(const Dims& dims, Rng& rng) {
  return DenseTensor(dims, rng.normal_vector(product(dims)));
}

}  // namespace

TEST_CASE("flat layout runs the first index fastest") {
  DenseTensor x = iota_tensor({2, 3, 2});
  CHECK(x.at({0, 0, 0}) == 1.0);
  CHECK(x.at({1, 0, 0}) == 2.0);
  CHECK(x.at({0, 1, 0}) == 3.0);
  CHECK(x.at({0, 0, 1}) == 7.0);
  CHECK(x.at({1, 2, 1}) == 12.0);
  CHECK_THROWS_AS(x.at({2, 0, 0}), InvalidInput);
  CHECK_THROWS_AS(x.at({0, 0}), InvalidInput);
  CHECK_THROWS_AS(DenseTensor({2, 0, 2}), InvalidInput);
}

TEST_CASE("matricize of a matrix is itself, transposed for mode 2") {
  DenseTensor x = iota_tensor({2, 3});
  Matrix m0 = matricize(x, 0);
  CHECK(m0.rows() == 2);
  CHECK(m0.cols() == 3);
  CHECK(m0(0, 0) == 1.0);
  CHECK(m0(1, 0) == 2.0);
  CHECK(m0(0, 1) == 3.0);
  CHECK((matricize(x, 1) - m0.transpose()).norm() == 0.0);
}

TEST_CASE("mode-2 unfolding of the 1..8 cube") {
  DenseTensor x = iota_tensor({2, 2, 2});
  Matrix m = matricize(x, 1);
  Matrix want(2, 4);
  want << 1, 2, 5, 6, 3, 4, 7, 8;
  CHECK((m - want).norm() == 0.0);
}

TEST_CASE("unfolding a zero tensor gives zero of the right shape") {
  DenseTensor x({3, 4, 5});
  for (Index k = 0; k < 3; ++k) {
    Matrix m = matricize(x, k);
    CHECK(m.rows() == x.dims()[static_cast<std::size_t>(k)]);
    CHECK(m.cols() == 60 / x.dims()[static_cast<std::size_t>(k)]);
    CHECK(m.norm() == 0.0);
  }
}

TEST_CASE("fold inverts matricize bitwise") {
  Rng rng(11);
  for (Dims dims : {Dims{4}, Dims{3, 5}, Dims{2, 3, 4}, Dims{2, 2, 3, 2}}) {
    DenseTensor x = random_tensor(dims, rng);
    for (Index k = 0; k < x.order(); ++k) {
      DenseTensor back = fold(matricize(x, k), dims, k);
      CHECK((back.vec() - x.vec()).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  CHECK_THROWS_AS(matricize(iota_tensor({2, 2}), 2), InvalidInput);
  CHECK_THROWS_AS(fold(Matrix::Zero(2, 3), {2, 2}, 0), InvalidInput);
}

TEST_CASE("mode product with the identity and with a scaling") {
  Rng rng(12);
  DenseTensor x = random_tensor({2, 3, 2}, rng);
  for (Index k = 0; k < 3; ++k) {
    const Index dk = x.dims()[static_cast<std::size_t>(k)];
    DenseTensor same = mode_product(x, Matrix::Identity(dk, dk), k);
    CHECK((same.vec() - x.vec()).norm() == 0.0);
    DenseTensor twice = mode_product(x, 2.0 * Matrix::Identity(dk, dk), k);
    CHECK((twice.vec() - 2.0 * x.vec()).norm() == 0.0);
  }
}

TEST_CASE("mode-1 swap permutes the cube vectorization") {
  DenseTensor x = iota_tensor({2, 2, 2});
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  Vector want(8);
  want << 2, 1, 4, 3, 6, 5, 8, 7;
  CHECK((mode_product(x, swap, 0).vec() - want).norm() == 0.0);
}

TEST_CASE("mode product matches a times the unfolding, rectangular included") {
  Rng rng(13);
  DenseTensor x = random_tensor({3, 2, 4}, rng);
  for (Index k = 0; k < 3; ++k) {
    const Index dk = x.dims()[static_cast<std::size_t>(k)];
    Matrix a = rng.normal_matrix(5, dk);
    DenseTensor y = mode_product(x, a, k);
    CHECK(y.dims()[static_cast<std::size_t>(k)] == 5);
    CHECK((matricize(y, k) - a * matricize(x, k)).norm() == 0.0);
  }
  CHECK_THROWS_AS(mode_product(x, Matrix::Zero(2, 2), 0), InvalidInput);
}

TEST_CASE("mode products along distinct modes commute") {
  Rng rng(14);
  DenseTensor x = random_tensor({3, 4, 2}, rng);
  Matrix a = rng.normal_matrix(3, 3);
  Matrix b = rng.normal_matrix(2, 2);
  DenseTensor lhs = mode_product(mode_product(x, a, 0), b, 2);
  DenseTensor rhs = mode_product(mode_product(x, b, 2), a, 0);
  CHECK((lhs.vec() - rhs.vec()).norm() <= 1e-12 * lhs.vec().norm());
}

TEST_CASE("kronecker chain conventions") {
  std::vector<Matrix> eyes{Matrix::Identity(2, 2), Matrix::Identity(3, 3)};
  CHECK((kron_chain(eyes) - Matrix::Identity(6, 6)).norm() == 0.0);

  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 1, 1, 0;
  std::vector<Matrix> ab{a, b};
  Matrix chain = kron_chain(ab);  // b kron a
  CHECK((chain.block(0, 0, 2, 2) - 0.0 * a).norm() == 0.0);
  CHECK((chain.block(0, 2, 2, 2) - a).norm() == 0.0);
  CHECK((chain.block(2, 0, 2, 2) - a).norm() == 0.0);
  CHECK((chain - kron(b, a)).norm() == 0.0);

  std::vector<Matrix> single{a};
  CHECK((kron_chain(single) - a).norm() == 0.0);
}

TEST_CASE("kronecker chain matches stacked mode products") {
  Rng rng(15);
  Dims dims{2, 3, 2};
  DenseTensor x = random_tensor(dims, rng);
  std::vector<Matrix> mats;
  for (Index dk : dims) mats.push_back(rng.normal_matrix(dk, dk));
  DenseTensor y = x;
  for (Index k = 0; k < 3; ++k) y = mode_product(y, mats[static_cast<std::size_t>(k)], k);
  Vector via_kron = kron_chain(mats) * x.vec();
  CHECK((y.vec() - via_kron).norm() <= 1e-12 * y.vec().norm());
}

TEST_CASE("kron_chain_skip drops exactly one factor") {
  Rng rng(16);
  std::vector<Matrix> mats{rng.normal_matrix(2, 2), rng.normal_matrix(3, 3),
                           rng.normal_matrix(2, 2)};
  std::vector<Matrix> no_mid{mats[0], mats[2]};
  CHECK((kron_chain_skip(mats, 1) - kron_chain(no_mid)).norm() == 0.0);
  std::vector<Matrix> one{mats[1]};
  CHECK((kron_chain_skip(one, 0) - Matrix::Identity(1, 1)).norm() == 0.0);
}

TEST_CASE("outer product of vectors") {
  Vector u(2), v(3);
  u << 1, 2;
  v << 4, 5, 6;
  std::vector<Vector> uv{u, v};
  DenseTensor t = outer(uv);
  CHECK(t.dims() == Dims{2, 3});
  CHECK(t.at({1, 2}) == 12.0);
  CHECK(t.at({0, 1}) == 5.0);
}

TEST_CASE("commutation map sends vec to vec of the transpose") {
  for (Index n : {1, 2, 5}) {
    CHECK((perm_p(1, n).dense() - Matrix::Identity(n, n)).norm() == 0.0);
  }
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  Vector vm(4);
  vm << 1, 3, 2, 4;  // column-major vec of m
  Vector vt(4);
  vt << 1, 2, 3, 4;  // vec of the transpose
  CHECK((perm_p(2, 2).apply(vm) - vt).norm() == 0.0);

  CHECK((perm_p(2, 3).dense() * perm_p(3, 2).dense() -
         Matrix::Identity(6, 6))
            .norm() == 0.0);
  CHECK((perm_p(2, 3).dense().transpose() - perm_p(3, 2).dense()).norm() ==
        0.0);
  CHECK((perm_p(4, 3).inverse().dense() - perm_p(3, 4).dense()).norm() == 0.0);
}

TEST_CASE("commutation map swaps kronecker order") {
  Rng rng(17);
  const Index m1 = 2, n1 = 3, m2 = 4, n2 = 2;
  Matrix a = rng.normal_matrix(m1, n1);
  Matrix b = rng.normal_matrix(m2, n2);
  Matrix lhs = kron(b, a);
  Matrix rhs = perm_p(m1, m2).dense() * kron(a, b) * perm_p(n2, n1).dense();
  CHECK((lhs - rhs).norm() == 0.0);
}

TEST_CASE("mode-k vectorization permutation") {
  Dims d22{2, 2};
  CHECK((perm_q(0, d22).dense() - Matrix::Identity(4, 4)).norm() == 0.0);
  CHECK((perm_q(1, d22).dense() - perm_p(2, 2).dense()).norm() == 0.0);

  Dims d222{2, 2, 2};
  CHECK((perm_q(2, d222).dense() - perm_p(2, 4).dense()).norm() == 0.0);

  Rng rng(18);
  for (Dims dims : {Dims{3, 2}, Dims{2, 3, 2}, Dims{2, 2, 2, 3}}) {
    DenseTensor x = random_tensor(dims, rng);
    for (Index k = 0; k < x.order(); ++k) {
      PermMap q = perm_q(k, dims);
      Matrix unf = matricize(x, k);
      Vector vec_unf = Eigen::Map<const Vector>(unf.data(), unf.size());
      CHECK((q.apply(x.vec()) - vec_unf).norm() == 0.0);
      Matrix qd = q.dense();
      CHECK((qd * qd.transpose() - Matrix::Identity(qd.rows(), qd.cols()))
                .norm() == 0.0);
    }
  }
  CHECK_THROWS_AS(perm_q(2, d22), InvalidInput);
}

TEST_CASE("rearrangement of an identity kronecker is a rank-one outer") {
  Dims dims{2, 2};
  Matrix phi = Matrix::Identity(4, 4);
  DenseTensor g = rearrange_phi(phi, dims);
  Vector e(4);
  e << 1, 0, 0, 1;
  std::vector<Vector> ee{e, e};
  CHECK((g.vec() - outer(ee).vec()).norm() == 0.0);
  CHECK(g.dims() == Dims{4, 4});
}

TEST_CASE("rearrangement sends kronecker chains to outer products exactly") {
  Rng rng(19);
  for (Dims dims : {Dims{2, 3}, Dims{2, 2, 2}, Dims{2, 3, 2}, Dims{2, 2, 2, 2}}) {
    const Index K = static_cast<Index>(dims.size());
    for (int R = 1; R <= 3; ++R) {
      Matrix phi = Matrix::Zero(product(dims), product(dims));
      DenseTensor want;
      for (int r = 0; r < R; ++r) {
        std::vector<Matrix> mats;
        std::vector<Vector> vecs;
        for (Index k = 0; k < K; ++k) {
          const Index dk = dims[static_cast<std::size_t>(k)];
          mats.push_back(rng.normal_matrix(dk, dk));
          vecs.push_back(Eigen::Map<const Vector>(mats.back().data(),
                                                  mats.back().size()));
        }
        phi += kron_chain(mats);
        DenseTensor term = outer(vecs);
        if (r == 0)
          want = term;
        else
          want.vec() += term.vec();
      }
      DenseTensor got = rearrange_phi(phi, dims);
      CHECK((got.vec() - want.vec()).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
}

TEST_CASE("rearrangement is linear and invertible") {
  Rng rng(20);
  Dims dims{2, 3};
  Matrix m1 = rng.normal_matrix(6, 6);
  Matrix m2 = rng.normal_matrix(6, 6);
  DenseTensor g1 = rearrange_phi(m1, dims);
  DenseTensor g2 = rearrange_phi(m2, dims);
  DenseTensor g12 = rearrange_phi(m1 + m2, dims);
  CHECK((g12.vec() - (g1.vec() + g2.vec())).norm() == 0.0);
  CHECK((rearrange_phi_inv(g1, dims) - m1).norm() == 0.0);
  CHECK_THROWS_AS(rearrange_phi(Matrix::Zero(5, 5), dims), InvalidInput);
}

TEST_CASE("spectral radius on small matrices") {
  SpectralRadius r1 = spectral_radius(Matrix::Identity(4, 4));
  CHECK(r1.converged);
  CHECK(r1.value == doctest::Approx(1.0).epsilon(1e-10));

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.5;
  d(1, 1) = 0.3;
  CHECK(spectral_radius(d).value == doctest::Approx(0.5).epsilon(1e-10));

  Matrix j(2, 2);
  j << 0, 1, -0.25, 1;
  CHECK(spectral_radius(j).value == doctest::Approx(0.5).epsilon(1e-6));

  CHECK_THROWS_AS(spectral_radius(Matrix::Zero(2, 3)), InvalidInput);
}

TEST_CASE("spectral radius switches to iteration for large matrices") {
  const Index n = 600;
  Rng rng(21);
  Vector diag(n);
  for (Index i = 0; i < n; ++i)
    diag[i] = 0.9 * static_cast<double>(i + 1) / static_cast<double>(n);
  Matrix q = Eigen::HouseholderQR<Matrix>(rng.normal_matrix(n, n))
                 .householderQ();
  Matrix m = q * diag.asDiagonal() * q.transpose();
  SpectralRadius r = spectral_radius(m);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(0.9).epsilon(1e-6));
}
