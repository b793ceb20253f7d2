#include "alora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "alora/error.hpp"

namespace alora {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw NumericError("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("Matrix: expected " + std::to_string(rows * cols) + " values, got " +
                     std::to_string(values_.size()));
  }
  if (!all_finite(values_)) throw NumericError("Matrix: non-finite entry");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::slice_cols(std::size_t first, std::size_t count) const {
  if (first + count > cols_) throw ShapeError("slice_cols: out of range");
  Matrix out(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = (*this)(i, first + j);
  return out;
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("slice_rows: out of range");
  Matrix out(count, cols_);
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              out.values_.begin());
  return out;
}

void Matrix::set_cols(std::size_t first, const Matrix& block) {
  if (block.rows() != rows_ || first + block.cols() > cols_) {
    throw ShapeError("set_cols: block does not fit");
  }
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < block.cols(); ++j) (*this)(i, first + j) = block(i, j);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : values_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t p = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < p; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto ov = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return out;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.values()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double best = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) best = std::max(best, std::abs(av[i] - bv[i]));
  return best;
}

double relative_error(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "relative_error");
  double num = 0.0;
  double den = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    num += (av[i] - bv[i]) * (av[i] - bv[i]);
    den += bv[i] * bv[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), std::numeric_limits<double>::min());
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

AttentionMask AttentionMask::diagonal(std::size_t n) {
  AttentionMask m(n, 0);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
  return m;
}

AttentionMask AttentionMask::full(std::size_t n) { return AttentionMask(n, 1); }

Matrix softmax_rows(const Matrix& logits, const AttentionMask& mask) {
  if (mask.active() && (mask.size() != logits.rows() || mask.size() != logits.cols())) {
    throw ShapeError("softmax_rows: mask shape differs from logits");
  }
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in_row = logits.row(i);
    auto out_row = out.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < in_row.size(); ++j) {
      if (!mask.active() || mask.allowed(i, j)) peak = std::max(peak, in_row[j]);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
      throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < in_row.size(); ++j) {
      if (mask.active() && !mask.allowed(i, j)) continue;
      out_row[j] = std::exp(in_row[j] - peak);
      total += out_row[j];
    }
    for (double& v : out_row) v /= total;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& s, const Matrix& grad_s) {
  require_same_shape(s, grad_s, "softmax_rows_backward");
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto s_row = s.row(i);
    auto g_row = grad_s.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < s_row.size(); ++j) dot += s_row[j] * g_row[j];
    auto o_row = out.row(i);
    for (std::size_t j = 0; j < s_row.size(); ++j) o_row[j] = s_row[j] * (g_row[j] - dot);
  }
  return out;
}

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kJacobiTolerance = 1e-12;

// One-sided Jacobi for a tall (rows >= cols) matrix. Columns are held
// contiguously so each rotation touches two dense vectors.
SvdResult jacobi_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<std::vector<double>> w(n, std::vector<double>(m));
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0;
        double beta = 0.0;
        double gamma = 0.0;
        const auto& wp = w[p];
        const auto& wq = w[q];
        for (std::size_t i = 0; i < m; ++i) {
          alpha += wp[i] * wp[i];
          beta += wq[i] * wq[i];
          gamma += wp[i] * wq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        auto rotate = [c, s](std::vector<double>& x, std::vector<double>& y) {
          for (std::size_t i = 0; i < x.size(); ++i) {
            const double xi = x[i];
            const double yi = y[i];
            x[i] = c * xi - s * yi;
            y[i] = s * xi + c * yi;
          }
        };
        rotate(w[p], w[q]);
        rotate(v[p], v[q]);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (double x : w[j]) acc += x * x;
    norms[j] = std::sqrt(acc);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  const double largest = n == 0 ? 0.0 : norms[order[0]];
  const double zero_tol =
      static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon() * largest;

  std::vector<std::vector<double>> u_cols;
  u_cols.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    std::vector<double> u(m, 0.0);
    if (norms[j] > zero_tol && norms[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) u[i] = w[j][i] / norms[j];
    } else {
      // Complete the basis: Gram-Schmidt a standard basis vector against the
      // columns collected so far, twice for stability.
      for (std::size_t e = 0; e < m; ++e) {
        std::vector<double> cand(m, 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& prev : u_cols) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += prev[i] * cand[i];
            for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * prev[i];
          }
        }
        double len = 0.0;
        for (double x : cand) len += x * x;
        len = std::sqrt(len);
        if (len > 1e-8) {
          for (double& x : cand) x /= len;
          u = std::move(cand);
          break;
        }
      }
    }
    u_cols.push_back(u);
    std::vector<double> vv = v[j];

    double sign = 1.0;
    for (double x : u) {
      if (std::abs(x) > 1e-15) {
        sign = x < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = sign * u[i];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = sign * vv[i];
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.empty()) throw ShapeError("svd: empty matrix");
  if (!all_finite(m.values())) throw NumericError("svd: non-finite entry");
  if (m.rows() >= m.cols()) return jacobi_tall(m);
  SvdResult t = jacobi_tall(m.transposed());
  // A^T = U' S V'^T  =>  A = V' S U'^T; re-apply the sign rule to the new U.
  SvdResult out{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  for (std::size_t k = 0; k < out.sigma.size(); ++k) {
    double sign = 1.0;
    for (std::size_t i = 0; i < out.u.rows(); ++i) {
      if (std::abs(out.u(i, k)) > 1e-15) {
        sign = out.u(i, k) < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    if (sign < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, k) = -out.v(i, k);
    }
  }
  return out;
}

double svd_zero_tolerance(const SvdResult& s, std::size_t rows, std::size_t cols) {
  const double largest = s.sigma.empty() ? 0.0 : s.sigma.front();
  return static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() *
         largest;
}

GemanLoss geman_loss_grad(const Matrix& s, std::size_t r) {
  if (!s.is_square()) throw ShapeError("geman_loss_grad: matrix must be square");
  return geman_loss_grad(s, svd(s), r);
}

GemanLoss geman_loss_grad(const Matrix& s, const SvdResult& dec, std::size_t r) {
  if (!s.is_square()) throw ShapeError("geman_loss_grad: matrix must be square");
  GemanLoss out{0.0, Matrix(s.rows(), s.cols())};
  const double zero_tol = svd_zero_tolerance(dec, s.rows(), s.cols());
  for (std::size_t i = r; i < dec.sigma.size(); ++i) {
    const double sigma = dec.sigma[i];
    if (sigma <= zero_tol) continue;
    out.loss += sigma / (sigma + 1.0);
    const double weight = 1.0 / ((sigma + 1.0) * (sigma + 1.0));
    for (std::size_t a = 0; a < s.rows(); ++a) {
      const double ua = weight * dec.u(a, i);
      auto g_row = out.grad.row(a);
      for (std::size_t b = 0; b < s.cols(); ++b) g_row[b] += ua * dec.v(b, i);
    }
  }
  return out;
}

}  // namespace alora
