#include "alora/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "alora/csv.hpp"
#include "alora/error.hpp"

namespace alora {

namespace {

constexpr char kMagic[6] = {'A', 'L', 'O', 'R', 'A', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u64(std::size_t v) { put<std::uint64_t>(v); }
  void f64(double v) { put<double>(v); }
  void u8(bool v) { put<std::uint8_t>(v ? 1 : 0); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw DataError(source_ + ": truncated checkpoint");
    return v;
  }
  std::size_t u64() {
    const auto v = get<std::uint64_t>();
    if (v > (std::uint64_t{1} << 40)) throw DataError(source_ + ": implausible size field");
    return static_cast<std::size_t>(v);
  }
  double f64() { return get<double>(); }
  bool u8() { return get<std::uint8_t>() != 0; }
  std::uint8_t byte() { return get<std::uint8_t>(); }
  std::string str() {
    std::string s(u64(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw DataError(source_ + ": truncated checkpoint");
    return s;
  }

 private:
  std::istream& in_;
  std::string source_;
};

ModelParams skeleton(const TrainConfig& cfg, std::size_t d, std::vector<EmbeddingChannel> channels) {
  ModelParams p;
  p.kernels.kernel_size = cfg.kernel_size;
  p.kernels.channels = std::move(channels);
  const std::size_t dh = cfg.d_model / cfg.heads;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    AttentionLayerParams layer;
    layer.layer_index = l;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      layer.heads.push_back({Matrix(cfg.d_model, dh), Matrix(cfg.d_model, dh), Matrix(cfg.d_model, dh)});
    }
    layer.w_proj = Matrix(cfg.d_model, cfg.d_model);
    p.layers.push_back(std::move(layer));
  }
  p.w_out = Matrix(cfg.d_model, d);
  return p;
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".manifest");
  return p;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const TrainConfig& c = ckpt.cfg;
  const ModelParams& p = ckpt.params;
  p.validate();
  std::ostringstream buf;
  Writer w(buf);
  buf.write(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  for (std::size_t v : {c.window, c.d_model, c.heads, c.layers, c.max_epochs, c.patience, c.k_pairs, c.rank_r,
                        static_cast<std::size_t>(c.seed), c.batch_size, c.kernel_size, p.input_dims()}) {
    w.u64(v);
  }
  w.f64(c.lambda_reg);
  w.f64(c.learning_rate);
  w.f64(c.val_fraction);
  w.u8(c.skip);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
  w.u8(c.causal_mask);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.embedding));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.correlation));
  w.u8(c.freeze_embedding);
  w.u8(c.freeze_values);
  w.u8(c.freeze_output);
  w.u8(ckpt.h1.has_value());
  w.f64(ckpt.h1.value_or(0.0));

  w.u64(p.pairs.pairs.size());
  for (const auto& pair : p.pairs.pairs) {
    w.u64(pair.i);
    w.u64(pair.j);
    w.f64(pair.score);
  }
  for (const auto& ch : p.kernels.channels) {
    w.u64(ch.first);
    w.u64(ch.second);
  }
  w.u8(ckpt.norm.has_value());
  if (ckpt.norm) {
    if (ckpt.norm->mean.size() != p.input_dims() || ckpt.norm->std.size() != p.input_dims()) {
      throw ShapeError("checkpoint: normalisation stats do not match the series count");
    }
    for (double m : ckpt.norm->mean) w.f64(m);
    for (double s : ckpt.norm->std) w.f64(s);
  }
  w.u64(ckpt.series_names.size());
  for (const auto& name : ckpt.series_names) w.str(name);
  const auto flat = pack_params(p);
  w.u64(flat.size());
  for (double v : flat) w.f64(v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << buf.str();
  if (!out) throw DataError("write failed for '" + path.string() + "'");

  std::ofstream man(manifest_path(path), std::ios::binary);
  if (!man) throw DataError("cannot write '" + manifest_path(path).string() + "'");
  man << "format=ALORA1\nversion=" << kVersion << "\nwindow=" << c.window << "\nd_model=" << c.d_model
      << "\nheads=" << c.heads << "\nlayers=" << c.layers << "\ninput_dims=" << p.input_dims()
      << "\nkernel_size=" << c.kernel_size << "\nk_pairs=" << c.k_pairs << "\npair_count=" << p.pairs.pairs.size()
      << "\nrank_r=" << c.rank_r << "\nlambda_reg=" << format_double(c.lambda_reg)
      << "\nlearning_rate=" << format_double(c.learning_rate) << "\nskip=" << (c.skip ? 1 : 0)
      << "\nactivation=" << (c.activation == Activation::gelu ? "gelu" : "identity")
      << "\ncausal_mask=" << (c.causal_mask ? 1 : 0)
      << "\nembedding=" << (c.embedding == EmbeddingMode::identity ? "identity" : "pairwise")
      << "\nseed=" << c.seed << "\nh1=" << (ckpt.h1 ? format_double(*ckpt.h1) : "missing")
      << "\nparameter_count=" << flat.size() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  Reader r(in, path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not an ALORA1 checkpoint");
  }
  if (r.get<std::uint32_t>() != kVersion) throw DataError(path.string() + ": unsupported checkpoint version");

  Checkpoint ck;
  TrainConfig& c = ck.cfg;
  c.window = r.u64();
  c.d_model = r.u64();
  c.heads = r.u64();
  c.layers = r.u64();
  c.max_epochs = r.u64();
  c.patience = r.u64();
  c.k_pairs = r.u64();
  c.rank_r = r.u64();
  c.seed = r.get<std::uint64_t>();
  c.batch_size = r.u64();
  c.kernel_size = r.u64();
  const std::size_t d = r.u64();
  c.lambda_reg = r.f64();
  c.learning_rate = r.f64();
  c.val_fraction = r.f64();
  c.skip = r.u8();
  const std::uint8_t act = r.byte();
  c.causal_mask = r.u8();
  const std::uint8_t emb = r.byte();
  const std::uint8_t corr = r.byte();
  if (act > 1 || emb > 1 || corr > 1) throw DataError(path.string() + ": corrupt enum field");
  c.activation = static_cast<Activation>(act);
  c.embedding = static_cast<EmbeddingMode>(emb);
  c.correlation = static_cast<CorrelationMethod>(corr);
  c.freeze_embedding = r.u8();
  c.freeze_values = r.u8();
  c.freeze_output = r.u8();
  const bool has_h1 = r.u8();
  const double h1 = r.f64();
  if (has_h1) ck.h1 = h1;
  c.validate();

  PairSelection pairs;
  const std::size_t n_pairs = r.u64();
  for (std::size_t k = 0; k < n_pairs; ++k) {
    SeriesPair sp;
    sp.i = r.u64();
    sp.j = r.u64();
    sp.score = r.f64();
    pairs.pairs.push_back(sp);
  }
  std::vector<EmbeddingChannel> channels(c.d_model);
  for (auto& ch : channels) {
    ch.first = r.u64();
    ch.second = r.u64();
    ch.w_first.assign(c.kernel_size, 0.0);
    ch.w_second.assign(c.kernel_size, 0.0);
  }
  if (r.u8()) {
    NormStats ns;
    for (std::size_t j = 0; j < d; ++j) ns.mean.push_back(r.f64());
    for (std::size_t j = 0; j < d; ++j) ns.std.push_back(r.f64());
    for (double s : ns.std) ns.constant.push_back(s == 0.0);
    ck.norm = std::move(ns);
  }
  const std::size_t n_names = r.u64();
  for (std::size_t k = 0; k < n_names; ++k) ck.series_names.push_back(r.str());

  ck.params = skeleton(c, d, std::move(channels));
  ck.params.pairs = std::move(pairs);
  const std::size_t n_values = r.u64();
  std::vector<double> flat(n_values);
  for (double& v : flat) v = r.f64();
  unpack_params(flat, ck.params);
  ck.params.validate();
  return ck;
}

}  // namespace alora
