#include "alora/star_verify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "alora/csv.hpp"
#include "alora/error.hpp"
#include "alora/rng.hpp"

namespace alora {

UnrollLayer unroll_layer(const LayerForward& fwd, const AttentionLayerParams& params) {
  UnrollLayer u;
  u.attention = fwd.s;
  for (std::size_t h = 0; h < params.head_count(); ++h) u.value_maps.push_back(params.head_value_map(h));
  return u;
}

namespace {

void check_layers(std::span<const UnrollLayer> layers, const Matrix& x) {
  if (layers.empty()) throw ShapeError("unroll: no layers");
  for (const auto& l : layers) {
    if (l.attention.empty() || l.attention.size() != l.value_maps.size()) {
      throw ShapeError("unroll: each layer needs one attention matrix per value map");
    }
    for (const auto& s : l.attention) {
      if (s.rows() != x.rows() || s.cols() != x.rows()) throw ShapeError("unroll: attention is not T x T");
    }
    for (const auto& m : l.value_maps) {
      if (m.rows() != x.cols() || m.cols() != x.cols()) throw ShapeError("unroll: value map is not d_model square");
    }
  }
}

// Sums A X B over every per-layer choice; choice 0 is the identity when
// `with_identity`, otherwise choices index heads directly.
Matrix expand(std::span<const UnrollLayer> layers, const Matrix& x, bool with_identity,
              std::size_t& terms) {
  const std::size_t n_layers = layers.size();
  std::vector<std::size_t> choice(n_layers, 0);
  Matrix total(x.rows(), x.cols());
  terms = 0;
  while (true) {
    Matrix left = x;
    Matrix right = Matrix::identity(x.cols());
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (with_identity && choice[l] == 0) continue;
      const std::size_t h = with_identity ? choice[l] - 1 : choice[l];
      left = matmul(layers[l].attention[h], left);
      right = matmul(right, layers[l].value_maps[h]);
    }
    total += matmul(left, right);
    ++terms;

    std::size_t l = 0;
    for (; l < n_layers; ++l) {
      const std::size_t options = layers[l].attention.size() + (with_identity ? 1 : 0);
      if (++choice[l] < options) break;
      choice[l] = 0;
    }
    if (l == n_layers) break;
  }
  return total;
}

}  // namespace

Matrix unroll_no_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded) {
  check_layers(layers, x_embedded);
  std::size_t terms = 0;
  return expand(layers, x_embedded, false, terms);
}

std::vector<double> unroll_no_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded,
                                   std::size_t t) {
  check_layers(layers, x_embedded);
  if (t >= x_embedded.rows()) throw ShapeError("unroll: timestep out of range");
  // Propagate only row t of the temporal product: a_t = e_t S^(L) ... S^(1).
  const std::size_t n_layers = layers.size();
  const std::size_t dm = x_embedded.cols();
  std::vector<double> out(dm, 0.0);
  std::vector<std::size_t> choice(n_layers, 0);
  while (true) {
    Matrix a(1, x_embedded.rows());
    a(0, t) = 1.0;
    Matrix right = Matrix::identity(dm);
    for (std::size_t l = n_layers; l-- > 0;) a = matmul(a, layers[l].attention[choice[l]]);
    for (std::size_t l = 0; l < n_layers; ++l) right = matmul(right, layers[l].value_maps[choice[l]]);
    const Matrix row = matmul(matmul(a, x_embedded), right);
    for (std::size_t j = 0; j < dm; ++j) out[j] += row(0, j);

    std::size_t l = 0;
    for (; l < n_layers; ++l) {
      if (++choice[l] < layers[l].attention.size()) break;
      choice[l] = 0;
    }
    if (l == n_layers) break;
  }
  return out;
}

Matrix unroll_skip(std::span<const UnrollLayer> layers, const Matrix& x_embedded, std::size_t* term_count) {
  check_layers(layers, x_embedded);
  std::size_t terms = 0;
  Matrix out = expand(layers, x_embedded, true, terms);
  if (term_count != nullptr) *term_count = terms;
  return out;
}

std::string to_string(VerifyMode mode) {
  switch (mode) {
    case VerifyMode::no_skip: return "no_skip";
    case VerifyMode::skip: return "skip";
    case VerifyMode::ffn_regroup: return "ffn_regroup";
    case VerifyMode::approximation: return "approximation";
  }
  return "unknown";
}

std::string VerificationReport::line() const {
  std::string status = asserted ? (pass ? "PASS" : "FAIL") : "INFO";
  return status + " mode=" + to_string(mode) + " terms=" + std::to_string(term_count) +
         " max_abs_error=" + format_double(max_abs_error) + " max_rel_error=" + format_double(max_rel_error);
}

std::string StarCase::describe() const {
  return "L=" + std::to_string(layers) + " T=" + std::to_string(t_len) + " d_model=" + std::to_string(d_model) +
         " H=" + std::to_string(heads) + " mask=" + (causal ? "causal" : "none") + " skip=" + (skip ? "on" : "off") +
         " act=" + (activation == Activation::gelu ? "gelu" : "identity") + " seed=" + std::to_string(seed);
}

namespace {

void fill_errors(VerificationReport& r, const Matrix& got, const Matrix& want) {
  r.max_abs_error = max_abs_diff(got, want);
  const double scale = max_abs(want);
  r.max_rel_error = scale > 0.0 ? r.max_abs_error / scale : r.max_abs_error;
}

}  // namespace

VerificationReport verify_case(const StarCase& c) {
  if (c.layers == 0 || c.t_len == 0 || c.d_model == 0) throw ConfigError("star case: sizes must be positive");
  CounterRng rng(c.seed, 0x57a2);
  Matrix x(c.t_len, c.d_model);
  for (double& v : x.values()) v = rng.normal();
  LayerOptions opts{c.skip, c.activation, c.causal ? AttentionMask::causal(c.t_len) : AttentionMask{}};

  std::vector<UnrollLayer> unrolled;
  Matrix z = x;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const AttentionLayerParams params = make_attention_layer(c.d_model, c.heads, rng, l);
    LayerForward fwd = layer_forward(z, params, opts);
    unrolled.push_back(unroll_layer(fwd, params));
    z = std::move(fwd.output);
  }

  VerificationReport r;
  Matrix got;
  if (c.skip) {
    got = unroll_skip(unrolled, x, &r.term_count);
    r.mode = VerifyMode::skip;
  } else {
    got = unroll_no_skip(unrolled, x);
    r.term_count = 1;
    for (const auto& l : unrolled) r.term_count *= l.attention.size();
    r.mode = VerifyMode::no_skip;
    for (std::size_t t = 0; t < c.t_len; ++t) {
      const auto row = unroll_no_skip(unrolled, x, t);
      for (std::size_t j = 0; j < c.d_model; ++j) {
        r.max_abs_error = std::max(r.max_abs_error, std::abs(row[j] - got(t, j)));
      }
    }
  }
  const double row_error = r.max_abs_error;
  fill_errors(r, got, z);
  r.max_abs_error = std::max(r.max_abs_error, row_error);
  const double scale = max_abs(z);
  r.max_rel_error = std::max(r.max_rel_error, scale > 0.0 ? row_error / scale : row_error);
  if (c.activation != Activation::identity) {
    r.mode = VerifyMode::approximation;
    r.asserted = false;
    r.pass = true;
  } else {
    r.pass = r.max_rel_error <= kStarTolerance;
  }
  return r;
}

Matrix regroup_weights(const Matrix& b, const Matrix& w_ffn) {
  if (b.cols() != w_ffn.rows()) throw ShapeError("regroup: B columns must equal FFN rows");
  Matrix out(b.rows(), w_ffn.cols());
  for (std::size_t k = 0; k < b.rows(); ++k) {
    for (std::size_t j = 0; j < w_ffn.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < b.cols(); ++r) acc += w_ffn(r, j) * b(k, r);
      out(k, j) = acc;
    }
  }
  return out;
}

VerificationReport verify_ffn_regroup(const Matrix& b, const Matrix& w_ffn, const Matrix& a,
                                      const Matrix& x_embedded) {
  if (!a.is_square() || a.rows() != x_embedded.rows() || x_embedded.cols() != b.rows()) {
    throw ShapeError("verify_ffn_regroup: A, X and B do not compose");
  }
  const Matrix b_tilde = regroup_weights(b, w_ffn);
  VerificationReport r;
  r.mode = VerifyMode::ffn_regroup;
  r.term_count = 1;
  fill_errors(r, b_tilde, matmul(b, w_ffn));

  // STAR form with b~ versus the FFN applied after the latent map.
  const Matrix direct = matmul(matmul(matmul(a, x_embedded), b), w_ffn);
  Matrix star(a.rows(), w_ffn.cols());
  for (std::size_t t = 0; t < a.rows(); ++t) {
    for (std::size_t j = 0; j < w_ffn.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < b.rows(); ++k) {
        double lagged = 0.0;
        for (std::size_t q = 0; q < a.cols(); ++q) lagged += a(t, q) * x_embedded(q, k);
        acc += b_tilde(k, j) * lagged;
      }
      star(t, j) = acc;
    }
  }
  VerificationReport second;
  fill_errors(second, star, direct);
  r.max_abs_error = std::max(r.max_abs_error, second.max_abs_error);
  r.max_rel_error = std::max(r.max_rel_error, second.max_rel_error);
  r.pass = r.max_rel_error <= kStarTolerance;
  return r;
}

VerificationReport verify_ffn_regroup(const Matrix& b, const Matrix& w_ffn, std::uint64_t seed,
                                      std::size_t t_len) {
  CounterRng rng(seed, 0xff17);
  Matrix logits(t_len, t_len);
  for (double& v : logits.values()) v = rng.normal();
  const Matrix a = softmax_rows(logits);
  Matrix x(t_len, b.rows());
  for (double& v : x.values()) v = rng.normal();
  return verify_ffn_regroup(b, w_ffn, a, x);
}

std::vector<StarCase> default_star_grid(std::size_t count, std::uint64_t seed) {
  static constexpr std::size_t kLayers[] = {1, 2, 3};
  static constexpr std::size_t kT[] = {4, 8, 16};
  static constexpr std::size_t kD[] = {2, 4, 8};
  static constexpr std::size_t kHeads[] = {1, 2};
  std::vector<StarCase> grid;
  for (std::size_t i = 0; i < count; ++i) {
    StarCase c;
    c.layers = kLayers[i % 3];
    c.t_len = kT[(i / 3) % 3];
    c.d_model = kD[(i / 9 + i) % 3];
    c.heads = kHeads[(i / 2) % 2];
    c.causal = (i % 4) >= 2;
    c.skip = (i % 5) != 4;
    c.seed = seed + i;
    grid.push_back(c);
  }
  return grid;
}

}  // namespace alora
