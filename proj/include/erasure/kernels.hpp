#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace erasure {

enum class GeluVariant { Erf, Tanh };

// Row-major 32-bit matrix. Reductions over it are carried out in 64-bit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

Matrix identity(std::size_t n);

// a (m x k) times b (k x n). Each output element is a sequential 64-bit sum
// over k, so results are bit-reproducible.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise stable softmax; -inf entries act as masked positions.
Matrix softmax_rows(const Matrix& m);

std::vector<float> layer_norm(std::span<const float> x,
                              std::span<const float> gamma,
                              std::span<const float> beta, double eps = 1e-5);

// Returns 1/sqrt(var(x) + eps) with population variance, the factor
// layer_norm multiplies the centered input by.
double layer_norm_scale(std::span<const float> x, double eps);

double gelu(double x, GeluVariant variant = GeluVariant::Tanh);

double dot(std::span<const float> a, std::span<const float> b);
double mean(std::span<const float> x);

// Throws NumericError naming `what` on the first NaN/Inf.
void require_finite(std::span<const float> values, const char* what);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
void add_in_place(Matrix& acc, const Matrix& x);
void add_row_in_place(Matrix& acc, std::span<const float> bias);

}  // namespace erasure
