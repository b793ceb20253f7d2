#include "alora/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "alora/csv.hpp"
#include "alora/error.hpp"

namespace alora {

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"data", "train", "", "training CSV"},
      {"data", "test", "", "evaluation CSV"},
      {"data", "label_column", "label", "binary label column, used when present"},
      {"data", "loc_truth", "", "localization truth CSV (timestep,series_index)"},
      {"data", "normalize", "true", "z-score with training statistics"},
      {"data", "downsample", "1", "mean-pool factor"},
      {"model", "window", "20", "window length T"},
      {"model", "d_model", "512", "latent width"},
      {"model", "heads", "8", "attention heads"},
      {"model", "layers", "3", "attention layers"},
      {"model", "kernel_size", "3", "embedding filter taps"},
      {"model", "k_pairs", "512", "correlated pairs kept"},
      {"model", "rank_r", "1", "singular values spared by the penalty"},
      {"model", "skip", "true", "skip connections"},
      {"model", "activation", "identity", "identity or gelu"},
      {"model", "causal_mask", "false", "causal attention mask"},
      {"model", "embedding", "pairwise", "pairwise or identity"},
      {"model", "correlation", "spearman", "spearman or pearson"},
      {"train", "lambda_reg", "10", "penalty weight"},
      {"train", "learning_rate", "0.0001", "Adam step size"},
      {"train", "max_epochs", "10", "epoch limit"},
      {"train", "patience", "3", "early-stopping patience"},
      {"train", "batch_size", "64", "windows per batch"},
      {"train", "val_fraction", "0.1", "trailing share of windows held out"},
      {"train", "seed", "0", "random seed"},
      {"train", "freeze_embedding", "false", "keep embedding taps fixed"},
      {"train", "freeze_values", "false", "keep W_V and W_proj fixed"},
      {"train", "freeze_output", "false", "keep W_out fixed"},
      {"score", "checkpoint", "", "model file, defaults to <out>/model.ckpt"},
      {"score", "h2", "", "alarm threshold on AS"},
      {"localize", "checkpoint", "", "model file, defaults to <out>/model.ckpt"},
      {"localize", "top_k", "", "sum only the largest top_k contributions"},
      {"localize", "sign", "signed", "signed or absolute contributions"},
      {"eval", "scores", "", "score CSV, defaults to <out>/scores.csv"},
      {"eval", "score_column", "AS", "score column"},
      {"eval", "label_column", "label", "ground-truth column"},
      {"eval", "prediction_column", "", "binary prediction column; default alarms at the best-F1 threshold"},
      {"eval", "horizon", "", "affiliation horizon, defaults to 2 * window"},
      {"eval", "las", "", "LAS CSV for localization metrics"},
      {"eval", "p_percent", "100,150", "P values for HR@P, NDCG@P and IPS@P"},
      {"simulate", "n", "500", "rows"},
      {"simulate", "t1", "200", "shift start"},
      {"simulate", "t2", "300", "shift end (exclusive)"},
      {"simulate", "delta", "3", "shift added to series 1"},
      {"simulate", "mu1", "0", "mean of series 1"},
      {"simulate", "mu2", "0", "mean of series 2"},
      {"simulate", "sigma1", "1", "std of series 1"},
      {"simulate", "sigma2", "1", "std of series 2"},
      {"simulate", "seed", "0", "random seed"},
      {"star", "cases", "20", "grid size"},
      {"star", "seed", "0", "random seed"},
      {"star", "ffn_pairs", "20", "random B/W pairs for the regrouping check"},
      {"star", "activation", "identity", "identity or gelu"},
  };
  return schema;
}

namespace {

const ConfigKey* find_key(const std::string& section, const std::string& key) {
  for (const auto& k : config_schema()) {
    if (k.section == section && k.key == key) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string name(const std::string& section, const std::string& key) { return section + "." + key; }

}  // namespace

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const bool known = std::any_of(config_schema().begin(), config_schema().end(),
                                     [&](const ConfigKey& k) { return k.section == section; });
      if (!known) throw ConfigError(where() + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
    if (section.empty()) throw ConfigError(where() + "key outside of a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!find_key(section, key)) throw ConfigError(where() + "unknown key '" + name(section, key) + "'");
    if (cfg.values_.count({section, key})) throw ConfigError(where() + "duplicate key '" + name(section, key) + "'");
    cfg.values_[{section, key}] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!find_key(section, key)) throw ConfigError("unknown key '" + name(section, key) + "'");
  values_[{section, key}] = value;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  return get(section, key).has_value();
}

bool RunConfig::is_set(const std::string& section, const std::string& key) const {
  const auto it = values_.find({section, key});
  return it != values_.end() && !it->second.empty();
}

std::optional<std::string> RunConfig::get(const std::string& section, const std::string& key) const {
  const ConfigKey* k = find_key(section, key);
  if (!k) throw ConfigError("unknown key '" + name(section, key) + "'");
  if (auto it = values_.find({section, key}); it != values_.end() && !it->second.empty()) return it->second;
  if (!k->fallback.empty()) return k->fallback;
  return std::nullopt;
}

std::string RunConfig::text(const std::string& section, const std::string& key) const {
  auto v = get(section, key);
  if (!v) throw ConfigError("missing required key '" + name(section, key) + "'");
  return *v;
}

std::size_t RunConfig::count(const std::string& section, const std::string& key) const {
  const std::string v = text(section, key);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + name(section, key) + "' must be a non-negative integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::real(const std::string& section, const std::string& key) const {
  const std::string v = text(section, key);
  try {
    return parse_double_field(v, name(section, key), 0);
  } catch (const DataError&) {
    throw ConfigError("'" + name(section, key) + "' must be a finite number, got '" + v + "'");
  }
}

bool RunConfig::flag(const std::string& section, const std::string& key) const {
  const std::string v = text(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + name(section, key) + "' must be true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::counts(const std::string& section, const std::string& key) const {
  std::vector<std::size_t> out;
  std::istringstream in(text(section, key));
  std::string item;
  while (std::getline(in, item, ',')) {
    RunConfig one;
    one.values_[{section, key}] = trim(item);
    out.push_back(one.count(section, key));
  }
  if (out.empty()) throw ConfigError("'" + name(section, key) + "' must list at least one value");
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.window = count("model", "window");
  c.d_model = count("model", "d_model");
  c.heads = count("model", "heads");
  c.layers = count("model", "layers");
  c.kernel_size = count("model", "kernel_size");
  c.k_pairs = count("model", "k_pairs");
  c.rank_r = count("model", "rank_r");
  c.skip = flag("model", "skip");
  const std::string act = text("model", "activation");
  if (act == "identity") c.activation = Activation::identity;
  else if (act == "gelu") c.activation = Activation::gelu;
  else throw ConfigError("'model.activation' must be identity or gelu");
  c.causal_mask = flag("model", "causal_mask");
  const std::string emb = text("model", "embedding");
  if (emb == "pairwise") c.embedding = EmbeddingMode::pairwise;
  else if (emb == "identity") c.embedding = EmbeddingMode::identity;
  else throw ConfigError("'model.embedding' must be pairwise or identity");
  const std::string corr = text("model", "correlation");
  if (corr == "spearman") c.correlation = CorrelationMethod::spearman;
  else if (corr == "pearson") c.correlation = CorrelationMethod::pearson;
  else throw ConfigError("'model.correlation' must be spearman or pearson");
  c.lambda_reg = real("train", "lambda_reg");
  c.learning_rate = real("train", "learning_rate");
  c.max_epochs = count("train", "max_epochs");
  c.patience = count("train", "patience");
  c.batch_size = count("train", "batch_size");
  c.val_fraction = real("train", "val_fraction");
  c.seed = count("train", "seed");
  c.freeze_embedding = flag("train", "freeze_embedding");
  c.freeze_values = flag("train", "freeze_values");
  c.freeze_output = flag("train", "freeze_output");
  c.validate();
  return c;
}

MeanShiftSpec RunConfig::mean_shift_spec() const {
  MeanShiftSpec s;
  s.n = count("simulate", "n");
  s.t1 = count("simulate", "t1");
  s.t2 = count("simulate", "t2");
  s.delta = real("simulate", "delta");
  s.mu = {real("simulate", "mu1"), real("simulate", "mu2")};
  s.sigma = {real("simulate", "sigma1"), real("simulate", "sigma2")};
  s.seed = count("simulate", "seed");
  return s;
}

std::string RunConfig::resolved() const {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_schema()) {
    if (k.section != section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.key << " = " << get(k.section, k.key).value_or("") << '\n';
  }
  return out.str();
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << resolved();
}

}  // namespace alora
