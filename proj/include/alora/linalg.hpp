#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace alora {

// Dense row-major matrix of doubles. Entries supplied through the checked
// constructors must be finite.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }

  Matrix transposed() const;
  Matrix slice_cols(std::size_t first, std::size_t count) const;
  Matrix slice_rows(std::size_t first, std::size_t count) const;
  void set_cols(std::size_t first, const Matrix& block);

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ||a - b||_F / max(||b||_F, tiny)
double relative_error(const Matrix& a, const Matrix& b);
bool all_finite(std::span<const double> values);

// Boolean attention mask: allowed(i, j) == false plays the role of a -inf
// additive logit. A default-constructed mask is "no mask".
class AttentionMask {
 public:
  AttentionMask() = default;
  static AttentionMask causal(std::size_t n);
  static AttentionMask diagonal(std::size_t n);
  static AttentionMask full(std::size_t n);

  bool active() const noexcept { return n_ != 0; }
  std::size_t size() const noexcept { return n_; }
  bool allowed(std::size_t i, std::size_t j) const noexcept { return allowed_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allow) noexcept { allowed_[i * n_ + j] = allow; }

 private:
  explicit AttentionMask(std::size_t n, std::uint8_t fill) : n_(n), allowed_(n * n, fill) {}
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allowed_;
};

/// Row-wise softmax. Masked positions come out as exact zeros; a row with no
/// allowed position is rejected with NumericError.
Matrix softmax_rows(const Matrix& logits, const AttentionMask& mask = {});

/// Given S = softmax_rows(X) and dL/dS, returns dL/dX.
Matrix softmax_rows_backward(const Matrix& s, const Matrix& grad_s);

struct SvdResult {
  Matrix u;                   // rows x k, orthonormal columns
  std::vector<double> sigma;  // k = min(rows, cols), descending
  Matrix v;                   // cols x k, orthonormal columns
};

/// Thin SVD (full for square input) by one-sided Jacobi rotations.
///
/// Sweeps stop once every off-diagonal Gram entry satisfies
/// |g_pq| <= 1e-12 * sqrt(g_pp * g_qq), or after 60 sweeps. Left vectors for
/// zero singular values are completed to an orthonormal basis. Each left
/// singular vector's first nonzero entry is made non-negative.
SvdResult svd(const Matrix& m);

/// Singular values below this are treated as exact zeros.
double svd_zero_tolerance(const SvdResult& s, std::size_t rows, std::size_t cols);

struct GemanLoss {
  double loss = 0.0;
  Matrix grad;
};

/// Truncated Geman nuclear norm sum_{i>r} s_i / (s_i + 1) and its (sub)gradient
/// sum_{i>r} u_i v_i^T / (s_i + 1)^2. Numerically zero singular values
/// contribute neither loss nor gradient. At repeated singular values the
/// result is a subgradient.
GemanLoss geman_loss_grad(const Matrix& s, std::size_t r);
GemanLoss geman_loss_grad(const Matrix& s, const SvdResult& decomposition, std::size_t r);

}  // namespace alora
