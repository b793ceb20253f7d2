#include <cmath>
#include <limits>

#include "alora/error.hpp"
#include "alora/linalg.hpp"
#include "doctest.h"
#include "oracles.hpp"

using alora::Matrix;

TEST_CASE("matrix construction rejects bad input") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), alora::ShapeError);
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1, std::nan("")}), alora::NumericError);
  CHECK_THROWS_AS(Matrix(1, 1, std::vector<double>{std::numeric_limits<double>::infinity()}), alora::NumericError);
}

TEST_CASE("products match the naive oracle") {
  alora::CounterRng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(7), k = 1 + rng.below(7), n = 1 + rng.below(7);
    const Matrix a = oracle::random_matrix(m, k, rng);
    const Matrix b = oracle::random_matrix(k, n, rng);
    const Matrix want = oracle::naive_matmul(a, b);
    CHECK(alora::max_abs_diff(alora::matmul(a, b), want) < 1e-12);
    CHECK(alora::max_abs_diff(alora::matmul_tn(oracle::naive_transpose(a), b), want) < 1e-12);
    CHECK(alora::max_abs_diff(alora::matmul_nt(a, oracle::naive_transpose(b)), want) < 1e-12);
  }
  CHECK_THROWS_AS(alora::matmul(Matrix(2, 3), Matrix(2, 3)), alora::ShapeError);
}

TEST_CASE("slicing and column blocks") {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.slice_cols(1, 2) == Matrix::from_rows({{2, 3}, {5, 6}}));
  CHECK(m.slice_rows(1, 1) == Matrix::from_rows({{4, 5, 6}}));
  Matrix t(2, 3);
  t.set_cols(1, Matrix::from_rows({{7, 8}, {9, 10}}));
  CHECK(t == Matrix::from_rows({{0, 7, 8}, {0, 9, 10}}));
  CHECK(m.transposed() == oracle::naive_transpose(m));
}

TEST_CASE("softmax rows") {
  alora::CounterRng rng(3);
  const Matrix x = oracle::random_matrix(5, 5, rng, 3.0);
  const Matrix s = alora::softmax_rows(x);
  CHECK(alora::max_abs_diff(s, oracle::naive_softmax(x)) < 1e-14);
  for (std::size_t i = 0; i < 5; ++i) {
    double total = 0.0;
    for (double v : s.row(i)) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("causal mask zeroes the future") {
    const Matrix c = alora::softmax_rows(x, alora::AttentionMask::causal(5));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) CHECK(c(i, j) == 0.0);
    CHECK(c(0, 0) == 1.0);
  }
  SUBCASE("fully masked row is rejected") {
    alora::AttentionMask mask = alora::AttentionMask::full(2);
    mask.set(1, 0, false);
    mask.set(1, 1, false);
    CHECK_THROWS_AS(alora::softmax_rows(Matrix(2, 2), mask), alora::NumericError);
  }
  SUBCASE("large logits stay finite") {
    const Matrix big = Matrix::from_rows({{1000, 0}, {-1000, 1000}});
    const Matrix sb = alora::softmax_rows(big);
    CHECK(sb(0, 0) == doctest::Approx(1.0));
    CHECK(alora::all_finite(sb.values()));
  }
}

TEST_CASE("softmax backward matches central differences") {
  alora::CounterRng rng(5);
  const Matrix x = oracle::random_matrix(4, 4, rng);
  const Matrix w = oracle::random_matrix(4, 4, rng);
  auto f = [&](const Matrix& z) {
    const Matrix s = alora::softmax_rows(z);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += s.values()[i] * w.values()[i];
    return acc;
  };
  const Matrix analytic = alora::softmax_rows_backward(alora::softmax_rows(x), w);
  CHECK(oracle::rel_diff(analytic, oracle::numeric_gradient(x, f)) < 1e-7);
}

namespace {

void check_svd(const Matrix& m) {
  const auto dec = alora::svd(m);
  const std::size_t k = std::min(m.rows(), m.cols());
  REQUIRE(dec.sigma.size() == k);
  Matrix us = dec.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) us(i, j) *= dec.sigma[j];
  CHECK(alora::max_abs_diff(alora::matmul_nt(us, dec.v), m) < 1e-10 * std::max(1.0, alora::max_abs(m)));
  CHECK(alora::max_abs_diff(alora::matmul_tn(dec.u, dec.u), Matrix::identity(k)) < 1e-10);
  CHECK(alora::max_abs_diff(alora::matmul_tn(dec.v, dec.v), Matrix::identity(k)) < 1e-10);
  for (std::size_t j = 0; j + 1 < k; ++j) CHECK(dec.sigma[j] >= dec.sigma[j + 1]);
  for (double s : dec.sigma) CHECK(s >= 0.0);
  double sum_sq = 0.0;
  for (double s : dec.sigma) sum_sq += s * s;
  const double fro = alora::frobenius_norm(m);
  CHECK(sum_sq == doctest::Approx(fro * fro).epsilon(1e-12));
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < dec.u.rows(); ++i) {
      if (std::abs(dec.u(i, j)) > 1e-12) {
        CHECK(dec.u(i, j) > 0.0);
        break;
      }
    }
  }
}

}  // namespace

TEST_CASE("svd reconstructs random, wide and rank-deficient matrices") {
  alora::CounterRng rng(7);
  for (int trial = 0; trial < 8; ++trial) check_svd(oracle::random_matrix(2 + rng.below(6), 2 + rng.below(6), rng));
  const Matrix u = oracle::random_matrix(6, 2, rng);
  const Matrix low_rank = alora::matmul_nt(u, oracle::random_matrix(6, 2, rng));
  check_svd(low_rank);
  const auto dec = alora::svd(low_rank);
  CHECK(dec.sigma[2] < 1e-12);
  check_svd(Matrix(3, 3));
}

TEST_CASE("svd of known matrices") {
  const auto diag = alora::svd(Matrix::from_rows({{0, 0, 0}, {0, 3, 0}, {0, 0, -2}}));
  CHECK(diag.sigma[0] == doctest::Approx(3.0));
  CHECK(diag.sigma[1] == doctest::Approx(2.0));
  CHECK(diag.sigma[2] == doctest::Approx(0.0));
  // [[3,0],[4,5]] has singular values sqrt(45) and sqrt(5).
  const auto two = alora::svd(Matrix::from_rows({{3, 0}, {4, 5}}));
  CHECK(two.sigma[0] == doctest::Approx(std::sqrt(45.0)).epsilon(1e-14));
  CHECK(two.sigma[1] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
  const auto id = alora::svd(Matrix::identity(8));
  for (double s : id.sigma) CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("geman loss values") {
  const Matrix d = Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}});
  CHECK(alora::geman_loss_grad(d, 1).loss == doctest::Approx(2.0 / 3.0 + 0.5).epsilon(1e-14));
  CHECK(alora::geman_loss_grad(d, 0).loss == doctest::Approx(0.75 + 2.0 / 3.0 + 0.5).epsilon(1e-14));
  CHECK(alora::geman_loss_grad(d, 3).loss == 0.0);
  CHECK(alora::geman_loss_grad(d, 7).loss == 0.0);
}

TEST_CASE("geman loss of a rank <= r matrix is zero with zero gradient") {
  alora::CounterRng rng(13);
  for (std::size_t r = 1; r <= 3; ++r) {
    const Matrix m = alora::matmul_nt(oracle::random_matrix(6, r, rng), oracle::random_matrix(6, r, rng));
    const auto g = alora::geman_loss_grad(m, r);
    CHECK(g.loss < 1e-12);
    CHECK(alora::max_abs(g.grad) < 1e-12);
  }
  const Matrix uniform(5, 5, 0.2);
  CHECK(alora::geman_loss_grad(uniform, 1).loss < 1e-12);
}

TEST_CASE("geman gradient matches central differences") {
  alora::CounterRng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = oracle::random_matrix(5, 5, rng);
    const std::size_t r = 1 + static_cast<std::size_t>(trial % 2);
    auto f = [&](const Matrix& x) { return alora::geman_loss_grad(x, r).loss; };
    CHECK(oracle::rel_diff(alora::geman_loss_grad(m, r).grad, oracle::numeric_gradient(m, f)) < 1e-6);
  }
}

TEST_CASE("geman loss is invariant under orthogonal transforms") {
  alora::CounterRng rng(19);
  const Matrix m = oracle::random_matrix(5, 5, rng);
  const Matrix q = alora::svd(oracle::random_matrix(5, 5, rng)).u;
  CHECK(alora::geman_loss_grad(alora::matmul(q, m), 1).loss ==
        doctest::Approx(alora::geman_loss_grad(m, 1).loss).epsilon(1e-10));
}
