#include <cmath>
#include <set>

#include "alora/error.hpp"
#include "alora/star_verify.hpp"
#include "doctest.h"
#include "oracles.hpp"

using alora::Matrix;

namespace {

std::vector<alora::UnrollLayer> random_layers(std::size_t n_layers, std::size_t t, std::size_t dm,
                                              std::size_t heads, alora::CounterRng& rng) {
  std::vector<alora::UnrollLayer> out(n_layers);
  for (auto& l : out)
    for (std::size_t h = 0; h < heads; ++h) {
      l.attention.push_back(oracle::random_stochastic(t, rng));
      l.value_maps.push_back(oracle::random_matrix(dm, dm, rng, 0.5));
    }
  return out;
}

}  // namespace

TEST_CASE("single-layer forms are definitional") {
  alora::CounterRng rng(1);
  const auto layers = random_layers(1, 5, 3, 1, rng);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const Matrix sxw = oracle::naive_matmul(oracle::naive_matmul(layers[0].attention[0], x), layers[0].value_maps[0]);
  CHECK(alora::max_abs_diff(alora::unroll_no_skip(layers, x), sxw) < 1e-12);
  std::size_t terms = 0;
  CHECK(alora::max_abs_diff(alora::unroll_skip(layers, x, &terms), x + sxw) < 1e-12);
  CHECK(terms == 2);
  const auto row = alora::unroll_no_skip(layers, x, 3);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(row[j] - sxw(3, j)) < 1e-12);
}

TEST_CASE("identity value maps give pure temporal mixing; zero maps leave the input") {
  alora::CounterRng rng(2);
  auto layers = random_layers(3, 4, 2, 1, rng);
  const Matrix x = oracle::random_matrix(4, 2, rng);
  for (auto& l : layers) l.value_maps[0] = Matrix::identity(2);
  Matrix a = Matrix::identity(4);
  for (const auto& l : layers) a = oracle::naive_matmul(l.attention[0], a);
  CHECK(alora::max_abs_diff(alora::unroll_no_skip(layers, x), oracle::naive_matmul(a, x)) < 1e-12);
  for (auto& l : layers) l.value_maps[0] = Matrix(2, 2);
  std::size_t terms = 0;
  CHECK(alora::unroll_skip(layers, x, &terms) == x);
  CHECK(terms == 8);
}

TEST_CASE("three-layer skip expansion lists every subset") {
  alora::CounterRng rng(3);
  const auto L = random_layers(3, 4, 3, 1, rng);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  auto S = [&](int l) { return L[l].attention[0]; };
  auto W = [&](int l) { return L[l].value_maps[0]; };
  auto term = [&](std::vector<int> idx) {
    Matrix a = Matrix::identity(4), b = Matrix::identity(3);
    for (int l : idx) {
      a = oracle::naive_matmul(S(l), a);
      b = oracle::naive_matmul(b, W(l));
    }
    return oracle::naive_matmul(oracle::naive_matmul(a, x), b);
  };
  Matrix want = x;
  for (auto idx : std::vector<std::vector<int>>{{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}}) want += term(idx);
  CHECK(oracle::rel_diff(alora::unroll_skip(L, x), want) < 1e-13);
}

TEST_CASE("verify_case passes across the grid, with and without masks") {
  for (std::size_t layers : {1u, 2u, 3u})
    for (std::size_t t : {4u, 8u, 16u})
      for (std::size_t dm : {2u, 4u, 8u})
        for (bool causal : {false, true}) {
          alora::StarCase c;
          c.layers = layers;
          c.t_len = t;
          c.d_model = dm;
          c.heads = (dm + t) % 4 == 0 ? 2 : 1;
          c.causal = causal;
          c.skip = true;
          c.seed = layers * 100 + t * 10 + dm;
          const auto r = alora::verify_case(c);
          CHECK_MESSAGE(r.pass, c.describe());
          CHECK(r.term_count == static_cast<std::size_t>(std::pow(c.heads + 1, layers)));
          c.skip = false;
          CHECK_MESSAGE(alora::verify_case(c).pass, c.describe());
        }
}

TEST_CASE("gelu runs report an approximation without asserting") {
  alora::StarCase c;
  c.layers = 2;
  c.t_len = 8;
  c.d_model = 4;
  c.activation = alora::Activation::gelu;
  const auto r = alora::verify_case(c);
  CHECK(r.mode == alora::VerifyMode::approximation);
  CHECK_FALSE(r.asserted);
  CHECK(r.max_rel_error > 1e-6);
  CHECK(r.line().rfind("INFO", 0) == 0);
}

TEST_CASE("ffn regrouping") {
  alora::CounterRng rng(5);
  const Matrix b = oracle::random_matrix(4, 4, rng);
  CHECK(alora::regroup_weights(b, Matrix::identity(4)) == b);
  for (int i = 0; i < 10; ++i) {
    const Matrix bb = oracle::random_matrix(5, 5, rng);
    const Matrix w = oracle::random_matrix(5, 5, rng);
    CHECK(oracle::rel_diff(alora::regroup_weights(bb, w), oracle::naive_matmul(bb, w)) < 1e-12);
    CHECK(alora::verify_ffn_regroup(bb, w, static_cast<std::uint64_t>(i)).pass);
  }
}

TEST_CASE("ffn regrouping reproduces the T = 2, d_model = 3 expansion") {
  alora::CounterRng rng(6);
  const Matrix b = oracle::random_matrix(3, 3, rng);
  const Matrix w = oracle::random_matrix(3, 3, rng);
  const Matrix a = oracle::random_stochastic(2, rng);
  const Matrix x = oracle::random_matrix(2, 3, rng);
  // y_t^(j) = sum_i w_ij [ sum_k b_ki (a_t,t-1 x_{t-1}^(k) + a_tt x_t^(k)) ] for t = 1 (second row).
  for (std::size_t j = 0; j < 3; ++j) {
    double y = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 3; ++k) y += w(i, j) * b(k, i) * (a(1, 0) * x(0, k) + a(1, 1) * x(1, k));
    const Matrix bt = alora::regroup_weights(b, w);
    double regrouped = 0.0;
    for (std::size_t k = 0; k < 3; ++k) regrouped += (a(1, 0) * x(0, k) + a(1, 1) * x(1, k)) * bt(k, j);
    CHECK(std::abs(y - regrouped) < 1e-12);
  }
  CHECK(alora::verify_ffn_regroup(b, w, a, x).pass);
}

TEST_CASE("default grid spans the required values") {
  const auto grid = alora::default_star_grid(20, 0);
  REQUIRE(grid.size() == 20);
  std::set<std::size_t> ls, ts, ds, hs;
  std::set<bool> masks;
  for (const auto& c : grid) {
    ls.insert(c.layers);
    ts.insert(c.t_len);
    ds.insert(c.d_model);
    hs.insert(c.heads);
    masks.insert(c.causal);
    CHECK(alora::verify_case(c).pass);
  }
  CHECK(ls.size() == 3);
  CHECK(ts.size() == 3);
  CHECK(ds.size() == 3);
  CHECK(hs.size() == 2);
  CHECK(masks.size() == 2);
}
