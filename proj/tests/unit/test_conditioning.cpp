#include "iaeilm/conditioning.hpp"
#include "iaeilm/flow.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace iaeilm;

namespace {

Matrix<double> randn(Index r, Index c, std::mt19937_64& rng) { return flow::standard_normal<double>(r, c, rng); }

nn::Linear<double> random_linear(Index in, Index out, std::mt19937_64& rng) {
  nn::Linear<double> l{randn(in, out, rng) * 0.4, randn(1, out, rng) * 0.3};
  return l;
}

}  // namespace

TEST_SUITE("conditioning") {

TEST_CASE("iacr matches the gated product computed per element") {
  std::mt19937_64 rng(5);
  const Index T = 7, D = 6, M = 4;
  const auto h = randn(T, D, rng), m = randn(T, M, rng);
  cond::IacrWeights<double> w{random_linear(D, M, rng), random_linear(M, M, rng)};
  const auto c = cond::iacr(m, h, w).values;
  REQUIRE(c.rows() == T);
  REQUIRE(c.cols() == M);
  const auto a = oracle::affine(oracle::to_grid(h), w.from_hidden);
  const auto b = oracle::affine(oracle::to_grid(m), w.from_melody);
  for (Index t = 0; t < T; ++t)
    for (Index k = 0; k < M; ++k) CHECK(c(t, k) == doctest::Approx(std::tanh(a[t][k]) * std::tanh(b[t][k])).epsilon(1e-14));
  CHECK(c.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("refined condition stays strictly inside (-1, 1) for extreme inputs") {
  std::mt19937_64 rng(6);
  const Matrix<double> h = randn(5, 4, rng) * 50.0, m = randn(5, 3, rng) * 50.0;
  cond::IacrWeights<double> w{random_linear(4, 3, rng), random_linear(3, 3, rng)};
  const auto c = cond::iacr(m, h, w).values;
  CHECK(c.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(c.allFinite());
}

TEST_CASE("iacr depends on the hidden state") {
  std::mt19937_64 rng(7);
  const auto m = randn(4, 3, rng);
  cond::IacrWeights<double> w{random_linear(5, 3, rng), random_linear(3, 3, rng)};
  const auto c1 = cond::iacr(m, randn(4, 5, rng), w).values;
  const auto c2 = cond::iacr(m, randn(4, 5, rng), w).values;
  CHECK((c1 - c2).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("modulation params split the projection as [gamma | beta]") {
  std::mt19937_64 rng(8);
  const auto c = randn(3, 4, rng);
  const auto f = random_linear(4, 10, rng);
  const auto p = cond::modulation_params(c, f);
  const auto full = oracle::affine(oracle::to_grid(c), f);
  for (Index t = 0; t < 3; ++t)
    for (Index j = 0; j < 5; ++j) {
      CHECK(p.gamma(t, j) == doctest::Approx(full[t][j]));
      CHECK(p.beta(t, j) == doctest::Approx(full[t][5 + j]));
    }
  CHECK_THROWS_AS(cond::modulation_params(c, random_linear(4, 9, rng)), ShapeError);
}

TEST_CASE("eilm and eilm_zero are element-wise affine maps") {
  std::mt19937_64 rng(9);
  const Index T = 5, D = 3, M = 2;
  const auto h = randn(T, D, rng);
  const cond::RefinedCondition<double> c{randn(T, M, rng).array().tanh().matrix()};
  const auto f = random_linear(M, 2 * D, rng);
  const auto gb = oracle::affine(oracle::to_grid(c.values), f);
  const auto y = cond::eilm(h, c, f);
  const auto y0 = cond::eilm_zero(h, c, f);
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < D; ++j) {
      CHECK(y(t, j) == doctest::Approx(gb[t][j] * h(t, j) + gb[t][D + j]));
      CHECK(y0(t, j) == doctest::Approx((gb[t][j] + 1.0) * h(t, j) + gb[t][D + j]));
    }
}

TEST_CASE("eilm_zero with a zero projector is the identity") {
  std::mt19937_64 rng(10);
  const auto h = randn(6, 4, rng);
  const cond::RefinedCondition<double> c{randn(6, 3, rng)};
  CHECK(cond::eilm_zero(h, c, nn::linear_zeros<double>(3, 8)) == h);
}

TEST_CASE("film broadcasts one (gamma, beta) row over all frames") {
  std::mt19937_64 rng(12);
  const Index T = 6, D = 4, M = 3;
  const auto h = randn(T, D, rng);
  const auto m = randn(T, M, rng);
  const auto f = random_linear(M, 2 * D, rng);
  const auto pooled = cond::time_mean(m);
  for (Index k = 0; k < M; ++k) CHECK(pooled(0, k) == doctest::Approx(m.col(k).mean()));
  const auto y = cond::film_baseline(h, pooled, f);
  const auto gb = oracle::affine(oracle::to_grid(pooled), f)[0];
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < D; ++j) CHECK(y(t, j) == doctest::Approx((gb[j] + 1.0) * h(t, j) + gb[D + j]));
}

TEST_CASE("element-wise addition baseline adds the projected condition") {
  std::mt19937_64 rng(13);
  const auto h = randn(4, 5, rng);
  const cond::RefinedCondition<double> c{randn(4, 2, rng)};
  const auto f = random_linear(2, 5, rng);
  const auto want = oracle::from_grid(oracle::affine(oracle::to_grid(c.values), f)) + h;
  CHECK((cond::ea_baseline(h, c, f) - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("static condition ignores the hidden state") {
  std::mt19937_64 rng(14);
  const auto m = randn(4, 3, rng);
  const auto f = random_linear(3, 8, rng);
  const auto p = cond::static_condition(m, f);
  const auto q = cond::modulation_params(m, f);
  CHECK(p.gamma == q.gamma);
  CHECK(p.beta == q.beta);
}

TEST_CASE("copy degeneracy: gamma = 0, beta = m returns m and blocks the gradient to h") {
  std::mt19937_64 rng(15);
  const auto h = randn(8, 6, rng);
  const auto m = randn(8, 6, rng);
  cond::ModulationParams<double> p{Matrix<double>::Zero(8, 6), m};
  CHECK(cond::modulate(h, p) == m);
  cond::ModulationParams<double> dp;
  const auto dh = cond::modulate_backward(h, p, randn(8, 6, rng), false, dp);
  CHECK(dh.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("modulate_backward matches finite differences for broadcast rows") {
  std::mt19937_64 rng(16);
  const auto h = randn(5, 3, rng);
  const auto g = randn(5, 3, rng);
  cond::ModulationParams<double> p{randn(1, 3, rng), randn(1, 3, rng)};
  cond::ModulationParams<double> dp;
  cond::modulate_backward(h, p, g, true, dp);
  REQUIRE(dp.gamma.rows() == 1);
  const double eps = 1e-6;
  for (Index j = 0; j < 3; ++j) {
    auto pp = p, pm = p;
    pp.gamma(0, j) += eps;
    pm.gamma(0, j) -= eps;
    const double num = ((cond::modulate_zero(h, pp) - cond::modulate_zero(h, pm)).array() * g.array()).sum() / (2 * eps);
    CHECK(dp.gamma(0, j) == doctest::Approx(num).epsilon(1e-7));
  }
}

TEST_CASE("zero-initialized projectors give the identity on random inputs") {
  std::mt19937_64 rng(18);
  for (int k = 0; k < 100; ++k) {
    const auto h = randn(5, 6, rng);
    const cond::RefinedCondition<double> c{randn(5, 3, rng).array().tanh().matrix()};
    CHECK(cond::eilm_zero(h, c, nn::linear_zeros<double>(3, 12)) == h);
    CHECK(cond::ea_baseline(h, c, nn::linear_zeros<double>(3, 6)) == h);
  }
}

TEST_CASE("addition equals eilm_zero with the gamma half of the projector clamped to zero") {
  std::mt19937_64 rng(19);
  const Index T = 6, D = 5, M = 3;
  const auto h = randn(T, D, rng);
  const cond::RefinedCondition<double> c{randn(T, M, rng)};
  const auto add = random_linear(M, D, rng);
  nn::Linear<double> full = nn::linear_zeros<double>(M, 2 * D);
  full.weight.rightCols(D) = add.weight;
  full.bias.rightCols(D) = add.bias;
  CHECK((cond::ea_baseline(h, c, add) - cond::eilm_zero(h, c, full)).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(cond::ea_baseline(Matrix<double>(Matrix<double>::Zero(1, 2)), cond::RefinedCondition<double>{Matrix<double>::Ones(1, 1)},
                          nn::Linear<double>{(Matrix<double>(1, 2) << 1.0, -1.0).finished(), Matrix<double>::Zero(1, 2)}) ==
        (Matrix<double>(1, 2) << 1.0, -1.0).finished());
}

TEST_CASE("shape mismatches are reported") {
  std::mt19937_64 rng(17);
  cond::IacrWeights<double> w{random_linear(4, 3, rng), random_linear(3, 3, rng)};
  CHECK_THROWS_AS(cond::iacr(randn(5, 3, rng), randn(6, 4, rng), w), ShapeError);
  CHECK_THROWS_AS(cond::iacr(randn(5, 2, rng), randn(5, 4, rng), w), ShapeError);
  cond::ModulationParams<double> p{Matrix<double>::Zero(3, 4), Matrix<double>::Zero(3, 4)};
  CHECK_THROWS_AS(cond::modulate(randn(5, 4, rng), p), ShapeError);
}

}  // TEST_SUITE
