#include "alora/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "alora/checkpoint.hpp"
#include "alora/config.hpp"
#include "alora/csv.hpp"
#include "alora/error.hpp"
#include "alora/localize.hpp"
#include "alora/metrics.hpp"
#include "alora/rng.hpp"
#include "alora/star_verify.hpp"

namespace alora {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitFailure;
}

namespace {

RunConfig load_config(const CommandOptions& opts) {
  RunConfig cfg = opts.config ? RunConfig::load(*opts.config) : RunConfig{};
  if (opts.seed) {
    const std::string s = std::to_string(*opts.seed);
    cfg.set("train", "seed", s);
    cfg.set("simulate", "seed", s);
    cfg.set("star", "seed", s);
  }
  return cfg;
}

void prepare_out(const CommandOptions& opts, const RunConfig& cfg) {
  fs::create_directories(opts.out);
  cfg.write_resolved(opts.out / "resolved.cfg");
}

std::vector<std::string> csv_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  return parse_csv(line, path.string()).header;
}

TimeSeriesFrame read_frame(const RunConfig& cfg, const fs::path& path) {
  const std::string label = cfg.text("data", "label_column");
  const auto header = csv_header(path);
  const bool has_label = std::find(header.begin(), header.end(), label) != header.end();
  TimeSeriesFrame frame = load_csv(path, has_label ? std::optional<std::string>(label) : std::nullopt);
  if (auto truth = cfg.get("data", "loc_truth")) frame.loc_truth = load_loc_truth(*truth, frame.length());
  const std::size_t factor = cfg.count("data", "downsample");
  if (factor == 0) throw ConfigError("'data.downsample' must be >= 1");
  if (factor > 1) frame = downsample_mean(frame, factor);
  return frame;
}

fs::path input_path(const RunConfig& cfg) {
  if (auto p = cfg.get("data", "test")) return *p;
  return cfg.text("data", "train");
}

fs::path checkpoint_path(const RunConfig& cfg, const std::string& section, const CommandOptions& opts) {
  if (auto p = cfg.get(section, "checkpoint")) return *p;
  return opts.out / "model.ckpt";
}

struct LoadedInput {
  Checkpoint ckpt;
  TimeSeriesFrame frame;
};

LoadedInput load_scoring_input(const RunConfig& cfg, const std::string& section, const CommandOptions& opts) {
  LoadedInput in;
  in.ckpt = load_checkpoint(checkpoint_path(cfg, section, opts));
  in.frame = read_frame(cfg, input_path(cfg));
  if (in.frame.dims() != in.ckpt.params.input_dims()) {
    throw ShapeError("input has " + std::to_string(in.frame.dims()) + " series, checkpoint expects " +
                     std::to_string(in.ckpt.params.input_dims()));
  }
  if (cfg.is_set("model", "window")) {
    if (cfg.count("model", "window") != in.ckpt.cfg.window) {
      throw ShapeError("configured window " + cfg.text("model", "window") + " differs from the checkpoint's " +
                       std::to_string(in.ckpt.cfg.window));
    }
  }
  if (in.ckpt.norm) in.frame = normalize(in.frame, in.ckpt.norm).first;
  return in;
}

std::string timestamp_of(const TimeSeriesFrame& frame, std::size_t t) {
  return frame.timestamps.empty() ? std::to_string(t) : frame.timestamps[t];
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << body;
}

}  // namespace

int cmd_train(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  const TrainConfig tc = cfg.train_config();
  prepare_out(opts, cfg);
  TimeSeriesFrame frame = read_frame(cfg, cfg.text("data", "train"));
  std::optional<NormStats> stats;
  if (cfg.flag("data", "normalize")) {
    auto [normed, s] = normalize(frame);
    frame = std::move(normed);
    stats = std::move(s);
  }
  const TrainResult result = train(frame, tc);

  Checkpoint ck{tc, result.params, result.thresholds.h1, stats, frame.names};
  save_checkpoint(ck, opts.out / "model.ckpt");
  save_pairs(result.params.pairs, opts.out / "pairs.csv");
  write_text(opts.out / "h1.txt", "h1=" + format_double(result.thresholds.h1) + "\n");

  CsvWriter hist(opts.out / "history.csv", {"epoch", "train_reconstruction", "train_regularization", "val_loss"});
  for (const auto& e : result.history.epochs) {
    hist.write_row({std::to_string(e.epoch), format_double(e.train_reconstruction),
                    format_double(e.train_regularization), format_double(e.val_loss)});
  }
  CsvWriter traj(opts.out / "sigma_trajectory.csv", {"step", "sigma4", "sigma5"});
  for (std::size_t i = 0; i < result.history.sigma4.size(); ++i) {
    traj.write_row({std::to_string(i), format_double(result.history.sigma4[i]),
                    format_double(result.history.sigma5[i])});
  }
  std::cout << "trained " << result.history.epochs.size() << " epoch(s)"
            << (result.history.stopped_early ? " (early stop)" : "") << ", h1=" << format_double(result.thresholds.h1)
            << "\n";
  return kExitOk;
}

int cmd_score(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  LoadedInput in = load_scoring_input(cfg, "score", opts);
  if (!in.ckpt.h1) throw ConfigError("checkpoint has no h1 threshold");
  prepare_out(opts, cfg);

  Thresholds th{*in.ckpt.h1, std::nullopt};
  if (cfg.has("score", "h2")) th.h2 = cfg.real("score", "h2");
  const ScoreSeries s = th.h2 ? detect(in.frame, in.ckpt.params, in.ckpt.cfg, th)
                              : score_series(in.frame, in.ckpt.params, in.ckpt.cfg, th.h1);

  std::vector<std::string> header{"timestamp", "AS", "alora_t_score", "residual_sq"};
  if (in.frame.labels) header.emplace_back("label");
  if (th.h2) header.emplace_back("alarm");
  CsvWriter out(opts.out / "scores.csv", header);
  for (std::size_t t = 0; t < s.as.size(); ++t) {
    std::vector<std::string> row{timestamp_of(in.frame, t), format_double(s.as[t]), std::to_string(s.alora_score[t]),
                                 format_double(s.residual_sq[t])};
    if (in.frame.labels) row.emplace_back((*in.frame.labels)[t] ? "1" : "0");
    if (th.h2) row.emplace_back(s.alarms[t] ? "1" : "0");
    out.write_row(row);
  }
  save_matrix_csv(s.residuals, in.frame.names, opts.out / "residuals.csv");
  std::ostringstream meta;
  meta << "rows=" << s.as.size() << "\nwarmup_rows=" << s.warmup << "\nh1=" << format_double(th.h1)
       << "\nh2=" << (th.h2 ? format_double(*th.h2) : "unset") << '\n';
  write_text(opts.out / "scores.meta", meta.str());
  std::cout << "scored " << s.as.size() << " timesteps (" << s.warmup << " warm-up rows from the first window)\n";
  return kExitOk;
}

int cmd_localize(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  LoadedInput in = load_scoring_input(cfg, "localize", opts);
  prepare_out(opts, cfg);
  const TrainConfig& tc = in.ckpt.cfg;
  const ScoreSeries s = score_series(in.frame, in.ckpt.params, tc, in.ckpt.h1.value_or(0.0));
  const ContributionWeights w = contribution_weights(in.ckpt.params, tc.skip, tc.activation);

  std::optional<std::size_t> top_k;
  if (cfg.has("localize", "top_k")) top_k = cfg.count("localize", "top_k");
  const std::string sign_name = cfg.text("localize", "sign");
  ContributionSign sign = ContributionSign::signed_value;
  if (sign_name == "absolute") sign = ContributionSign::absolute;
  else if (sign_name != "signed") throw ConfigError("'localize.sign' must be signed or absolute");
  const LasResult result = las(w.c, s.residuals, top_k, sign);
  if (result.clamped) {
    std::cerr << "warning: top_k " << *top_k << " exceeds the series count; clamped to " << result.top_k << "\n";
  }

  std::vector<std::string> latent;
  for (std::size_t k = 0; k < w.b.rows(); ++k) latent.push_back("z" + std::to_string(k));
  save_matrix_csv(result.scores, in.frame.names, opts.out / "las.csv");
  save_matrix_csv(w.c, in.frame.names, opts.out / "contribution_c.csv");
  save_matrix_csv(w.e, latent, opts.out / "contribution_e.csv");
  save_matrix_csv(w.b, latent, opts.out / "contribution_b.csv");
  std::ostringstream meta;
  meta << "weights=" << w.label() << "\nskip=" << (w.skip_mode ? 1 : 0) << "\ntop_k=" << result.top_k
       << "\nsign=" << sign_name << "\nwarmup_rows=" << s.warmup << '\n';
  write_text(opts.out / "localize.meta", meta.str());
  std::cout << "localized " << result.scores.rows() << " timesteps, contribution weights " << w.label() << "\n";
  return kExitOk;
}

namespace {

std::size_t column_index(const CsvTable& table, const std::string& name, const std::string& source) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) throw DataError(source + ": column '" + name + "' not found");
  return static_cast<std::size_t>(it - table.header.begin());
}

std::vector<double> numeric_column(const CsvTable& table, std::size_t col, const std::string& source) {
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (col >= table.rows[r].size()) throw DataError(source + ":" + std::to_string(table.lines[r]) + ": short row");
    out.push_back(parse_double_field(table.rows[r][col], source, table.lines[r]));
  }
  return out;
}

std::vector<std::uint8_t> binary_column(const CsvTable& table, std::size_t col, const std::string& source) {
  std::vector<std::uint8_t> out;
  for (double v : numeric_column(table, col, source)) out.push_back(v != 0.0 ? 1 : 0);
  return out;
}

}  // namespace

int cmd_eval(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  const fs::path scores_path = cfg.has("eval", "scores") ? fs::path(cfg.text("eval", "scores")) : opts.out / "scores.csv";
  const CsvTable table = read_csv_file(scores_path);
  const std::string src = scores_path.string();
  const auto scores = numeric_column(table, column_index(table, cfg.text("eval", "score_column"), src), src);
  const auto labels = binary_column(table, column_index(table, cfg.text("eval", "label_column"), src), src);
  const std::size_t horizon =
      cfg.has("eval", "horizon") ? cfg.count("eval", "horizon") : 2 * cfg.count("model", "window");
  const auto p_values = cfg.counts("eval", "p_percent");
  prepare_out(opts, cfg);

  const BestF1 best = best_f1_sweep(scores, labels);
  write_sweep_csv(best, opts.out / "sweep.csv");
  std::vector<std::uint8_t> predicted;
  if (auto col = cfg.get("eval", "prediction_column")) {
    predicted = binary_column(table, column_index(table, *col, src), src);
  } else {
    for (double s : scores) predicted.push_back(s > best.h2 ? 1 : 0);
  }
  const SweepPoint point = point_f1(predicted, labels);
  const auto pred_events = events_from_labels(predicted);
  const auto true_events = events_from_labels(labels);
  const AffiliationResult aff = affiliation_pr(pred_events, true_events, horizon);

  Report report;
  report["best_f1"] = format_double(best.f1);
  report["best_f1.precision"] = format_double(best.precision);
  report["best_f1.recall"] = format_double(best.recall);
  report["best_f1.threshold"] = format_double(best.threshold);
  report["h2"] = format_double(best.h2);
  report["point.f1"] = format_double(point.f1);
  report["point.precision"] = format_double(point.precision);
  report["point.recall"] = format_double(point.recall);
  report["affiliation_style.precision"] = format_double(aff.precision);
  report["affiliation_style.recall"] = format_double(aff.recall);
  report["affiliation_style.f1"] = format_double(aff.f1);
  report["affiliation_style.precision_undefined"] = aff.precision_undefined ? "1" : "0";
  report["affiliation_style.horizon"] = std::to_string(horizon);
  report["rows"] = std::to_string(scores.size());

  if (auto las_path = cfg.get("eval", "las")) {
    const auto truth_path = cfg.get("data", "loc_truth");
    if (!truth_path) throw ConfigError("'eval.las' needs 'data.loc_truth'");
    const CsvTable las_table = read_csv_file(*las_path);
    Matrix las_m(las_table.rows.size(), las_table.header.size());
    for (std::size_t j = 0; j < las_m.cols(); ++j) {
      const auto col = numeric_column(las_table, j, *las_path);
      for (std::size_t t = 0; t < las_m.rows(); ++t) las_m(t, j) = col[t];
    }
    const LocalizationTruth truth = load_loc_truth(*truth_path, las_m.rows());
    if (las_m.rows() != labels.size()) throw ShapeError("LAS rows differ from the score rows");
    for (std::size_t p : p_values) {
      const auto loc = localization_scores(las_m, truth, p);
      const std::string suffix = "@" + std::to_string(p);
      report["hr" + suffix] = format_double(loc.hit_rate);
      report["ndcg" + suffix] = format_double(loc.ndcg);
      report["ips" + suffix] = format_double(ips(las_m, true_events, truth, p));
      report["localization_steps"] = std::to_string(loc.steps);
    }
  }
  write_report(report, opts.out / "report.txt");
  std::cout << "best_f1=" << report["best_f1"] << " affiliation_style.f1=" << report["affiliation_style.f1"] << "\n";
  return kExitOk;
}

int cmd_simulate(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  const MeanShiftSpec spec = cfg.mean_shift_spec();
  prepare_out(opts, cfg);
  const TimeSeriesFrame frame = simulate_mean_shift(spec);
  save_csv(frame, opts.out / "simulated.csv");
  save_loc_truth(*frame.loc_truth, opts.out / "simulated_loc_truth.csv");
  std::cout << "simulated " << frame.length() << " rows x " << frame.dims() << " series\n";
  return kExitOk;
}

int cmd_star_check(const CommandOptions& opts) {
  const RunConfig cfg = load_config(opts);
  const std::string act = cfg.text("star", "activation");
  if (act != "identity" && act != "gelu") throw ConfigError("'star.activation' must be identity or gelu");
  prepare_out(opts, cfg);
  const std::uint64_t seed = cfg.count("star", "seed");
  std::ostringstream report;
  bool all_pass = true;
  for (StarCase c : default_star_grid(cfg.count("star", "cases"), seed)) {
    if (act == "gelu") c.activation = Activation::gelu;
    const VerificationReport r = verify_case(c);
    all_pass = all_pass && r.pass;
    report << r.line() << ' ' << c.describe() << '\n';
  }
  CounterRng rng(seed, 0xb0b);
  for (std::size_t i = 0; i < cfg.count("star", "ffn_pairs"); ++i) {
    const std::size_t dm = 2 + rng.below(7);
    Matrix b(dm, dm);
    Matrix w(dm, dm);
    for (double& v : b.values()) v = rng.normal();
    for (double& v : w.values()) v = rng.normal();
    const VerificationReport r = verify_ffn_regroup(b, w, seed + i);
    all_pass = all_pass && r.pass;
    report << r.line() << " d_model=" << dm << '\n';
  }
  report << (all_pass ? "OVERALL PASS" : "OVERALL FAIL") << '\n';
  write_text(opts.out / "star_report.txt", report.str());
  std::cout << report.str();
  return all_pass ? kExitOk : kExitNumeric;
}

int run_command(const std::string& name, const CommandOptions& opts) {
  static const std::map<std::string, int (*)(const CommandOptions&)> commands = {
      {"train", cmd_train},       {"score", cmd_score},       {"localize", cmd_localize},
      {"eval", cmd_eval},         {"simulate", cmd_simulate}, {"star-check", cmd_star_check},
  };
  const auto it = commands.find(name);
  if (it == commands.end()) {
    std::cerr << "error: unknown command '" << name << "'\n";
    return kExitConfig;
  }
  try {
    return it->second(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace alora
