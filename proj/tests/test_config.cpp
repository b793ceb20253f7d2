#include <filesystem>
#include <fstream>
#include <sstream>

#include "alora/checkpoint.hpp"
#include "alora/config.hpp"
#include "alora/error.hpp"
#include "alora/harness.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

TEST_CASE("config parsing") {
  const auto cfg = alora::RunConfig::parse(
      "# comment\n[model]\nwindow = 12\nskip=false\n\n[train]\nlambda_reg = 2.5\n; another\n");
  CHECK(cfg.count("model", "window") == 12);
  CHECK_FALSE(cfg.flag("model", "skip"));
  CHECK(cfg.real("train", "lambda_reg") == 2.5);
  CHECK(cfg.count("model", "heads") == 8);
  CHECK_FALSE(cfg.has("data", "train"));
  const auto tc = cfg.train_config();
  CHECK(tc.window == 12);
  CHECK(tc.lambda_reg == 2.5);
  CHECK(tc.d_model == 512);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(alora::RunConfig::parse("[model]\nwindw = 3\n"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[nosuch]\n"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("window = 3\n"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[model]\nwindow = 3\nwindow = 4\n"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[model]\nwindow 3\n"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[model]\nwindow = -3\n").count("model", "window"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[train]\nlambda_reg = -1\n").train_config(), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig::parse("[model]\nskip = maybe\n").flag("model", "skip"), alora::ConfigError);
  CHECK_THROWS_AS(alora::RunConfig{}.text("data", "train"), alora::ConfigError);
  try {
    alora::RunConfig::parse("[model]\n\nbogus = 1\n", "run.cfg");
  } catch (const alora::ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:3") != std::string::npos);
  }
}

TEST_CASE("resolved config reproduces itself") {
  auto cfg = alora::RunConfig::parse("[model]\nwindow = 9\n[eval]\np_percent = 100, 150\n");
  const auto again = alora::RunConfig::parse(cfg.resolved());
  CHECK(again.resolved() == cfg.resolved());
  CHECK(again.count("model", "window") == 9);
  CHECK(again.counts("eval", "p_percent") == std::vector<std::size_t>{100, 150});
}

TEST_CASE("exit codes") {
  CHECK(alora::exit_code_for(alora::ConfigError("x")) == 2);
  CHECK(alora::exit_code_for(alora::ShapeError("x")) == 2);
  CHECK(alora::exit_code_for(alora::DataError("x")) == 3);
  CHECK(alora::exit_code_for(alora::NumericError("x")) == 4);
  CHECK(alora::run_command("nope", {}) == 2);
}

TEST_CASE("score refuses a checkpoint without h1") {
  const fs::path dir = fs::temp_directory_path() / "alora_no_h1";
  fs::create_directories(dir);
  const auto frame = alora::simulate_mean_shift({});
  alora::save_csv(frame, dir / "data.csv");
  alora::TrainConfig tc;
  tc.window = 8;
  tc.d_model = 2;
  tc.heads = 1;
  tc.layers = 1;
  tc.k_pairs = 1;
  alora::Checkpoint ck{tc, alora::init_model(frame, tc), std::nullopt, std::nullopt, frame.names};
  alora::save_checkpoint(ck, dir / "model.ckpt");
  std::ofstream(dir / "run.cfg") << "[data]\ntest = " << (dir / "data.csv").string() << "\n";
  alora::CommandOptions opts;
  opts.config = dir / "run.cfg";
  opts.out = dir;
  CHECK_THROWS_AS(alora::cmd_score(opts), alora::ConfigError);
  CHECK(alora::run_command("score", opts) == 2);
}
