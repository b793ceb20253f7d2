#include <algorithm>
#include <cmath>
#include <filesystem>

#include "alora/data.hpp"
#include "alora/embedding.hpp"
#include "alora/error.hpp"
#include "doctest.h"
#include "oracles.hpp"

using alora::Matrix;

TEST_CASE("average ranks average ties") {
  const std::vector<double> x{10, 20, 10, 30};
  CHECK(alora::average_ranks(x) == std::vector<double>{1.5, 3, 1.5, 4});
}

TEST_CASE("correlations") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> cube{1, 8, 27, 64, 125};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  CHECK(alora::spearman(x, cube).value == doctest::Approx(1.0));
  CHECK(alora::pearson(x, cube).value < 1.0);
  CHECK(alora::spearman(x, rev).value == doctest::Approx(-1.0));
  const std::vector<double> flat{2, 2, 2, 2, 2};
  const auto deg = alora::spearman(x, flat);
  CHECK(deg.degenerate);
  CHECK(deg.value == 0.0);
  CHECK_THROWS_AS(alora::pearson(std::vector<double>{1}, std::vector<double>{1}), alora::ShapeError);
}

TEST_CASE("spearman is invariant under increasing transforms") {
  alora::CounterRng rng(2);
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = rng.normal();
    b[i] = a[i] + rng.normal();
  }
  std::vector<double> ea(40);
  std::transform(a.begin(), a.end(), ea.begin(), [](double v) { return std::exp(3.0 * v); });
  CHECK(alora::spearman(a, b).value == doctest::Approx(alora::spearman(ea, b).value).epsilon(1e-14));
}

namespace {

alora::TimeSeriesFrame frame_from(const Matrix& m) {
  alora::TimeSeriesFrame f;
  f.values = m;
  for (std::size_t j = 0; j < m.cols(); ++j) f.names.push_back("s" + std::to_string(j));
  return f;
}

}  // namespace

TEST_CASE("pair selection ranks by absolute correlation with stable ties") {
  alora::CounterRng rng(4);
  Matrix m(60, 4);
  for (std::size_t t = 0; t < 60; ++t) {
    const double base = rng.normal();
    m(t, 0) = base;
    m(t, 1) = rng.normal();
    m(t, 2) = -base + 0.01 * rng.normal();
    m(t, 3) = rng.normal();
  }
  const auto sel = alora::select_pairs(frame_from(m), 3);
  REQUIRE(sel.pairs.size() == 3);
  CHECK(sel.pairs[0].i == 0);
  CHECK(sel.pairs[0].j == 2);
  CHECK(sel.pairs[0].score > 0.9);
  for (std::size_t k = 0; k + 1 < sel.pairs.size(); ++k) CHECK(sel.pairs[k].score >= sel.pairs[k + 1].score);

  Matrix ident(5, 3);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j) ident(t, j) = static_cast<double>(t);
  const auto ties = alora::select_pairs(frame_from(ident), 10);
  REQUIRE(ties.pairs.size() == 3);
  CHECK((ties.pairs[0].i == 0 && ties.pairs[0].j == 1));
  CHECK((ties.pairs[1].i == 0 && ties.pairs[1].j == 2));
  CHECK((ties.pairs[2].i == 1 && ties.pairs[2].j == 2));
  CHECK_THROWS_AS(alora::select_pairs(frame_from(Matrix(5, 1)), 2), alora::ConfigError);

  const auto path = std::filesystem::temp_directory_path() / "alora_pairs.csv";
  alora::save_pairs(sel, path);
  const auto back = alora::load_pairs(path);
  CHECK(back.pairs == sel.pairs);
}

namespace {

// Explicit zero-padded convolution.
Matrix embed_oracle(const Matrix& x, const alora::EmbeddingKernels& k) {
  const long half = static_cast<long>(k.half_width());
  Matrix out(x.rows(), k.d_model());
  for (std::size_t c = 0; c < k.d_model(); ++c) {
    const auto& ch = k.channels[c];
    for (long t = 0; t < static_cast<long>(x.rows()); ++t) {
      double acc = 0.0;
      for (long l = 0; l < static_cast<long>(k.kernel_size); ++l) {
        const long src = t + l - half;
        if (src < 0 || src >= static_cast<long>(x.rows())) continue;
        acc += ch.w_first[l] * x(src, ch.first) + ch.w_second[l] * x(src, ch.second);
      }
      out(t, c) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("embedding matches the explicit convolution") {
  alora::CounterRng rng(9);
  alora::PairSelection sel{{{0, 1, 0.9}, {1, 3, 0.5}, {0, 2, 0.4}}};
  for (std::size_t ks : {1u, 3u, 5u}) {
    const auto k = alora::make_pairwise_kernels(sel, 7, ks, rng);
    CHECK(k.parameter_count() == 2 * ks * 7);
    CHECK(k.channels[3].first == 0);
    CHECK(k.channels[4].second == 3);
    const Matrix x = oracle::random_matrix(9, 4, rng);
    CHECK(alora::max_abs_diff(alora::embed(x, k), embed_oracle(x, k)) < 1e-13);
  }
}

TEST_CASE("identity kernels reproduce the window") {
  alora::CounterRng rng(1);
  const auto k = alora::make_identity_kernels(3, 3);
  const Matrix x = oracle::random_matrix(6, 3, rng);
  CHECK(alora::embed(x, k) == x);
  CHECK(k.lag_sum(1, 1) == 1.0);
  CHECK(k.lag_sum(1, 2) == 0.0);
}

TEST_CASE("embedding gradient matches central differences") {
  alora::CounterRng rng(21);
  alora::PairSelection sel{{{0, 1, 0.9}, {1, 2, 0.5}}};
  auto k = alora::make_pairwise_kernels(sel, 3, 3, rng);
  const Matrix x = oracle::random_matrix(6, 3, rng);
  const Matrix w = oracle::random_matrix(6, 3, rng);
  auto loss = [&](const alora::EmbeddingKernels& kk) {
    const Matrix e = alora::embed(x, kk);
    double acc = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) acc += e.values()[i] * w.values()[i];
    return acc;
  };
  const auto g = alora::embed_backward(x, k, w);
  const double h = 1e-6;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t l = 0; l < 3; ++l) {
      for (int side = 0; side < 2; ++side) {
        double& tap = side ? k.channels[c].w_second[l] : k.channels[c].w_first[l];
        const double orig = tap;
        tap = orig + h;
        const double up = loss(k);
        tap = orig - h;
        const double down = loss(k);
        tap = orig;
        const double want = (up - down) / (2 * h);
        const double got = side ? g.channels[c].w_second[l] : g.channels[c].w_first[l];
        CHECK(got == doctest::Approx(want).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("kernel validation") {
  alora::EmbeddingKernels k{3, {{0, 0, {0, 0, 0}, {0, 0, 0}}}};
  CHECK_THROWS_AS(k.validate(2), alora::ConfigError);
  k.channels[0].second = 5;
  CHECK_THROWS_AS(k.validate(2), alora::ConfigError);
  CHECK_THROWS_AS(alora::embed(Matrix(2, 2), alora::make_identity_kernels(2, 3)), alora::ShapeError);
}
