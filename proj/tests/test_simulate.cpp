#include <doctest.h>

#include <cmath>

#include "tenar/model.hpp"
#include "tenar/simulate.hpp"
#include "tenar/spectral.hpp"
#include "tenar/tensor.hpp"

using namespace tenar;

namespace {

Matrix lag_cov(const TensorSeries& s, Index lag) {
  const Index d = product(s.dims);
  Matrix acc = Matrix::Zero(d, d);
  for (Index t = lag; t < s.length(); ++t)
    acc += s.obs[static_cast<std::size_t>(t)].vec() *
           s.obs[static_cast<std::size_t>(t - lag)].vec().transpose();
  return acc / static_cast<double>(s.length() - lag);
}

}  // namespace

TEST_CASE("random model hits the requested radius deterministically") {
  ModelSpec spec{{2, 3}, {2, 1}};
  TenArModel a = random_model(spec, 0.8, 99);
  TenArModel b = random_model(spec, 0.8, 99);
  CausalReport cr = causal(a);
  CHECK(cr.causal);
  CHECK(std::abs(cr.radius - 0.8) <= 2e-6);
  for (Index i = 0; i < spec.order(); ++i)
    for (Index r = 0; r < spec.kranks[static_cast<std::size_t>(i)]; ++r)
      for (Index k = 0; k < spec.mode_count(); ++k)
        CHECK((a.coeff(i, r, k) - b.coeff(i, r, k)).norm() == 0.0);

  TenArModel c = random_model(spec, 0.8, 100);
  CHECK((a.coeff(0, 0, 0) - c.coeff(0, 0, 0)).norm() > 0.0);
}

TEST_CASE("radius scales linearly with the last-mode factors at order one") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = random_model(spec, 0.8, 5);
  TenArModel scaled = m;
  scaled.coeff(0, 0, 1) *= 0.5;
  Matrix phi = var_coefficients(scaled)[0];
  CHECK(spectral_radius(phi).value == doctest::Approx(0.4).epsilon(1e-5));
}

TEST_CASE("noise settings produce the advertised families") {
  Dims dims{2, 3};
  NoiseSpec s1 = noise_cov(NoiseSetting::Identity, dims, 7);
  CHECK(s1.kind == NoiseKind::Identity);
  CHECK((s1.full_cov(dims) - Matrix::Identity(6, 6)).norm() == 0.0);

  NoiseSpec s2 = noise_cov(NoiseSetting::RandomDense, dims, 7);
  CHECK(s2.kind == NoiseKind::Dense);
  CHECK((s2.dense - s2.dense.transpose()).norm() <= 1e-12 * s2.dense.norm());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s2.dense);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  CHECK(es.eigenvalues().maxCoeff() > 0.0);
  NoiseSpec s2b = noise_cov(NoiseSetting::RandomDense, dims, 7);
  CHECK((s2.dense - s2b.dense).norm() == 0.0);

  NoiseSpec s3 = noise_cov(NoiseSetting::RandomSeparable, dims, 7);
  CHECK(s3.kind == NoiseKind::Separable);
  CHECK_NOTHROW(s3.validate(dims));
  CHECK(s3.factors[0].norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("separable setting degenerates to a positive scalar") {
  Dims ones{1, 1, 1};
  NoiseSpec s = noise_cov(NoiseSetting::RandomSeparable, ones, 21);
  REQUIRE(s.factors.size() == 3);
  CHECK(s.factors[0](0, 0) == doctest::Approx(1.0));
  CHECK(s.factors[1](0, 0) == doctest::Approx(1.0));
  CHECK(s.factors[2](0, 0) > 0.0);
  CHECK(s.full_cov(ones)(0, 0) == doctest::Approx(s.factors[2](0, 0)));
}

TEST_CASE("simulation is deterministic and rejects unstable models") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = random_model(spec, 0.7, 31);
  TensorSeries a = simulate_series(m, 50, 17);
  TensorSeries b = simulate_series(m, 50, 17);
  REQUIRE(a.length() == 50);
  for (Index t = 0; t < 50; ++t)
    CHECK((a.obs[static_cast<std::size_t>(t)].vec() -
           b.obs[static_cast<std::size_t>(t)].vec())
              .norm() == 0.0);

  TenArModel unit = zero_model(spec);
  unit.coeff(0, 0, 0) = Matrix::Identity(2, 2);
  unit.coeff(0, 0, 1) = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(simulate_series(unit, 10, 1), InvalidInput);
}

TEST_CASE("zero coefficients give white noise") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = zero_model(spec);
  const Index T = 10000;
  TensorSeries s = simulate_series(m, T, 3, /*burn_in=*/10);
  Vector mean = Vector::Zero(4);
  for (const DenseTensor& x : s.obs) mean += x.vec();
  mean /= static_cast<double>(T);
  CHECK(mean.lpNorm<Eigen::Infinity>() <= 5.0 / std::sqrt(double(T)));

  Matrix g0 = lag_cov(s, 0);
  CHECK((g0 - Matrix::Identity(4, 4)).lpNorm<Eigen::Infinity>() <=
        7.0 / std::sqrt(double(T)));
  Matrix g1 = lag_cov(s, 1);
  CHECK(g1.lpNorm<Eigen::Infinity>() <= 5.0 / std::sqrt(double(T)));
}

TEST_CASE("vanishing noise leaves the deterministic recursion") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = random_model(spec, 0.8, 41);
  m.noise = NoiseSpec::make_dense(1e-24 * Matrix::Identity(4, 4));
  TensorSeries s = simulate_series(m, 100, 9);
  for (Index t = 1; t < s.length(); ++t) {
    std::vector<DenseTensor> window{s.obs[static_cast<std::size_t>(t - 1)]};
    DenseTensor pred = predict_one(m, window);
    CHECK((s.obs[static_cast<std::size_t>(t)].vec() - pred.vec()).norm() <=
          1e-9);
  }
}

TEST_CASE("scalar autoregression reaches its stationary variance") {
  ModelSpec spec{{1}, {1}};
  TenArModel m = zero_model(spec);
  m.coeff(0, 0, 0) = 0.5 * Matrix::Identity(1, 1);
  const Index T = 100000;
  TensorSeries s = simulate_series(m, T, 13);
  double var = 0.0;
  for (const DenseTensor& x : s.obs) var += x.vec()[0] * x.vec()[0];
  var /= static_cast<double>(T);
  CHECK(var == doctest::Approx(4.0 / 3.0).epsilon(0.05));
}

TEST_CASE("doubling the burn-in barely moves the sample covariance") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = random_model(spec, 0.8, 23);
  const Index T = 10000;
  Matrix g500 = lag_cov(simulate_series(m, T, 77, 500), 0);
  Matrix g1000 = lag_cov(simulate_series(m, T, 77, 1000), 0);
  CHECK((g500 - g1000).norm() <= 0.01 * g500.norm());
}

TEST_CASE("separable innovations have the kronecker covariance") {
  Dims dims{2, 2, 2};
  ModelSpec spec{dims, {1}};
  TenArModel m = zero_model(spec);
  m.noise = noise_cov(NoiseSetting::RandomSeparable, dims, 55);
  const Index T = 100000;
  TensorSeries s = simulate_series(m, T, 5, /*burn_in=*/0);
  Matrix want = m.noise.full_cov(dims);
  Matrix got = lag_cov(s, 0);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) {
      const double se = std::sqrt(
          (want(i, i) * want(j, j) + want(i, j) * want(i, j)) / double(T));
      CHECK(std::abs(got(i, j) - want(i, j)) <= 5.0 * se);
    }
}

TEST_CASE("sample covariance stabilizes as the sample grows") {
  ModelSpec spec{{2, 2}, {1}};
  TenArModel m = random_model(spec, 0.8, 31);
  Matrix small = lag_cov(simulate_series(m, 1000, 19), 0);
  Matrix big = lag_cov(simulate_series(m, 10000, 19), 0);
  CHECK((small - big).norm() <= 0.10 * big.norm());
}

TEST_CASE("prediction needs a full lag window") {
  ModelSpec spec{{2, 2}, {1, 1}};
  TenArModel m = random_model(spec, 0.5, 71);
  std::vector<DenseTensor> short_window{DenseTensor({2, 2})};
  CHECK_THROWS_AS(predict_one(m, short_window), InvalidInput);
}
