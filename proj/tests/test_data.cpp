#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "alora/csv.hpp"
#include "alora/data.hpp"
#include "alora/error.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using alora::Matrix;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  const fs::path dir = fs::temp_directory_path() / "alora_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("csv parser handles quotes, CRLF and a BOM") {
  const auto t = alora::parse_csv("\xEF\xBB\xBF" "a,\"b,c\"\r\n1,\"say \"\"hi\"\"\"\r\n\r\n2,\"x\ny\"\n", "mem");
  REQUIRE(t.header == std::vector<std::string>{"a", "b,c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "say \"hi\"");
  CHECK(t.rows[1][1] == "x\ny");
  CHECK(t.lines[0] == 2);
  CHECK(t.lines[1] == 4);
  CHECK_THROWS_AS(alora::parse_csv("a\n\"open", "mem"), alora::DataError);
}

TEST_CASE("numeric fields and formatting") {
  CHECK(alora::parse_double_field(" 1.5 ", "s", 1) == 1.5);
  CHECK(alora::parse_double_field("-2e3", "s", 1) == -2000.0);
  const std::string msg = error_of([] { alora::parse_double_field("abc", "file.csv", 7); });
  CHECK(msg.find("file.csv:7") != std::string::npos);
  CHECK(msg.find("non-numeric") != std::string::npos);
  CHECK_THROWS_AS(alora::parse_double_field("nan", "s", 1), alora::DataError);
  for (double v : {0.1, 1.0 / 3.0, -1e-300, 12345.678}) {
    CHECK(alora::parse_double_field(alora::format_double(v), "s", 1) == v);
  }
  CHECK(alora::quote_csv_field("a,b") == "\"a,b\"");
}

TEST_CASE("load_csv reads timestamps, labels and reports bad rows") {
  const auto p = temp_file("good.csv", "timestamp,x,y,label\nt0,1,2,0\nt1,3,4,1\n");
  const auto f = alora::load_csv(p, std::string("label"));
  CHECK(f.length() == 2);
  CHECK(f.dims() == 2);
  CHECK(f.names == std::vector<std::string>{"x", "y"});
  CHECK(f.timestamps == std::vector<std::string>{"t0", "t1"});
  REQUIRE(f.labels);
  CHECK((*f.labels)[1] == 1);
  CHECK(f.values(1, 1) == 4.0);

  const auto bad = temp_file("bad.csv", "x,y\n1,2\n3,oops\n");
  const std::string msg = error_of([&] { alora::load_csv(bad, std::nullopt); });
  CHECK(msg.find(":3") != std::string::npos);
  CHECK_THROWS_AS(alora::load_csv(temp_file("ragged.csv", "x,y\n1,2\n3\n"), std::nullopt), alora::DataError);
  CHECK_THROWS_AS(alora::load_csv("/nonexistent/file.csv", std::nullopt), alora::DataError);
  CHECK_THROWS_AS(alora::load_csv(p, std::string("missing")), alora::DataError);
}

TEST_CASE("save_csv round-trips exactly") {
  alora::MeanShiftSpec spec;
  spec.n = 50;
  spec.t1 = 10;
  spec.t2 = 20;
  const auto f = alora::simulate_mean_shift(spec);
  const fs::path p = fs::temp_directory_path() / "alora_test_data" / "round.csv";
  alora::save_csv(f, p);
  const auto g = alora::load_csv(p, std::string("label"));
  CHECK(g.values == f.values);
  CHECK(*g.labels == *f.labels);

  const fs::path tp = fs::temp_directory_path() / "alora_test_data" / "truth.csv";
  alora::save_loc_truth(*f.loc_truth, tp);
  CHECK(alora::load_loc_truth(tp, f.length()) == *f.loc_truth);
}

TEST_CASE("normalization") {
  alora::TimeSeriesFrame f;
  f.values = Matrix::from_rows({{1, 5}, {2, 5}, {3, 5}, {6, 5}});
  f.names = {"a", "b"};
  auto [n, stats] = alora::normalize(f);
  double mean = 0.0, sq = 0.0;
  for (std::size_t t = 0; t < 4; ++t) mean += n.values(t, 0);
  for (std::size_t t = 0; t < 4; ++t) sq += n.values(t, 0) * n.values(t, 0);
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(sq / 4.0 == doctest::Approx(1.0));
  CHECK(stats.constant[1]);
  for (std::size_t t = 0; t < 4; ++t) CHECK(n.values(t, 1) == 0.0);
  const auto back = alora::denormalize(n, stats);
  CHECK(alora::max_abs_diff(back.values, f.values) < 1e-12);
  auto [again, same] = alora::normalize(f, stats);
  CHECK(again.values == n.values);
}

TEST_CASE("windows and downsampling") {
  CHECK(alora::window_starts(5, 3, 1) == std::vector<std::size_t>{0, 1, 2});
  CHECK(alora::window_starts(7, 3, 2) == std::vector<std::size_t>{0, 2, 4});
  CHECK(alora::window_starts(3, 3, 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(alora::window_starts(2, 3, 1), alora::DataError);

  alora::TimeSeriesFrame f;
  f.values = Matrix::from_rows({{1, 0}, {3, 0}, {5, 2}, {7, 2}, {9, 4}});
  f.names = {"a", "b"};
  f.labels = std::vector<std::uint8_t>{0, 1, 0, 0, 0};
  const auto w = alora::windows(f, 2);
  REQUIRE(w.size() == 4);
  CHECK(w[3] == Matrix::from_rows({{7, 2}, {9, 4}}));
  const auto d = alora::downsample_mean(f, 2);
  CHECK(d.values == Matrix::from_rows({{2, 0}, {6, 2}, {9, 4}}));
  CHECK(*d.labels == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("mean-shift simulation follows its specification") {
  const auto f = alora::simulate_mean_shift({});
  CHECK(f.length() == 500);
  CHECK(f.dims() == 2);
  REQUIRE(f.labels);
  for (std::size_t t = 0; t < 500; ++t) CHECK((*f.labels)[t] == (t >= 200 && t < 300 ? 1 : 0));
  CHECK(f.loc_truth->at(250) == std::vector<std::size_t>{0});
  CHECK_FALSE(f.loc_truth->defined(100));
  double inside = 0.0, outside = 0.0;
  for (std::size_t t = 0; t < 500; ++t) ((t >= 200 && t < 300) ? inside : outside) += f.values(t, 0);
  CHECK(inside / 100.0 - outside / 400.0 > 2.0);
  CHECK(alora::simulate_mean_shift({}).values == f.values);
  alora::MeanShiftSpec other;
  other.seed = 1;
  CHECK_FALSE(alora::simulate_mean_shift(other).values == f.values);
  alora::MeanShiftSpec bad;
  bad.t1 = 400;
  bad.t2 = 300;
  CHECK_THROWS_AS(alora::simulate_mean_shift(bad), alora::ConfigError);
}

TEST_CASE("anomaly injection") {
  alora::MeanShiftSpec spec;
  spec.delta = 0.0;
  const auto base = alora::simulate_mean_shift(spec);
  auto clean = base;
  clean.labels = std::vector<std::uint8_t>(base.length(), 0);
  clean.loc_truth = alora::LocalizationTruth(base.length());
  const auto shifted = alora::inject_anomaly(clean, alora::AnomalyKind::level_shift, 1, {10, 20}, 4.0, 1);
  for (std::size_t t = 10; t < 20; ++t) CHECK((*shifted.labels)[t] == 1);
  CHECK((*shifted.labels)[20] == 0);
  CHECK(shifted.loc_truth->at(15) == std::vector<std::size_t>{1});
  CHECK(shifted.values(15, 1) - base.values(15, 1) > 3.0);
  CHECK(shifted.values(15, 0) == base.values(15, 0));
  CHECK_THROWS_AS(alora::inject_anomaly(shifted, alora::AnomalyKind::spike, 1, {15, 25}, 1.0, 2), alora::ConfigError);
  const auto both = alora::inject_anomaly(shifted, alora::AnomalyKind::trend, 0, {15, 25}, 2.0, 2);
  CHECK(both.loc_truth->at(16) == std::vector<std::size_t>{0, 1});
  CHECK(alora::parse_anomaly_kind("variance_burst") == alora::AnomalyKind::variance_burst);
  CHECK_THROWS_AS(alora::parse_anomaly_kind("bogus"), alora::ConfigError);
}

TEST_CASE("events from labels and localization truth") {
  const std::vector<std::uint8_t> labels{0, 1, 1, 0, 1, 0, 1, 1};
  const auto ev = alora::events_from_labels(labels);
  REQUIRE(ev.size() == 3);
  CHECK(ev[0] == alora::EventSegment{1, 3});
  CHECK(ev[2] == alora::EventSegment{6, 8});
  alora::LocalizationTruth truth(5);
  truth.add(1, 3);
  truth.add(1, 0);
  truth.add(1, 3);
  truth.add(2, 2);
  CHECK(truth.at(1) == std::vector<std::size_t>{0, 3});
  CHECK(truth.over({0, 3}) == std::vector<std::size_t>{0, 2, 3});
}
