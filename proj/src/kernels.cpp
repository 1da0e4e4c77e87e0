#include "erasure/kernels.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "erasure/error.hpp"

namespace erasure {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw UsageError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape (" + std::to_string(rows_) + "x" +
                     std::to_string(cols_) + ")");
  }
}

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

// Tiled over rows of a and column blocks of b so a block of b stays in cache
// across a row tile. Each output element is still summed over p in order, and
// the build disables FP contraction, so every clone gives identical bits.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
__attribute__((target_clones("avx512f", "avx2", "default")))
#endif
void matmul_kernel(const float* ap, const float* bp, float* op, std::size_t m, std::size_t k,
                   std::size_t n) {
  constexpr std::size_t kRows = 8, kCols = 256;
  double acc[kRows * kCols];
  for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
    const std::size_t nj = std::min(kCols, n - j0);
    for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
      const std::size_t ni = std::min(kRows, m - i0);
      std::fill(acc, acc + kRows * kCols, 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const float* brow = bp + p * n + j0;
        for (std::size_t r = 0; r < ni; ++r) {
          const double av = ap[(i0 + r) * k + p];
          if (av == 0.0) continue;
          double* arow = acc + r * kCols;
          for (std::size_t j = 0; j < nj; ++j) arow[j] += av * static_cast<double>(brow[j]);
        }
      }
      for (std::size_t r = 0; r < ni; ++r) {
        float* orow = op + (i0 + r) * n + j0;
        const double* arow = acc + r * kCols;
        for (std::size_t j = 0; j < nj; ++j) orow[j] = static_cast<float>(arow[j]);
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matmul: inner dimensions differ " + shape_str(a) + " * " +
                     shape_str(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix out(m, n);
  matmul_kernel(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  require_finite(out.values(), "matmul output");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    double mx = kNegInf;
    for (float v : in) {
      if (std::isnan(v)) throw NumericError("softmax: NaN input in row " + std::to_string(r));
      mx = std::max(mx, static_cast<double>(v));
    }
    if (mx == kNegInf) {
      throw NumericError("softmax: row " + std::to_string(r) + " is entirely -inf");
    }
    if (std::isinf(mx)) throw NumericError("softmax: +inf input in row " + std::to_string(r));
    double sum = 0.0;
    std::vector<double> e(in.size());
    for (std::size_t c = 0; c < in.size(); ++c) {
      e[c] = std::exp(static_cast<double>(in[c]) - mx);
      sum += e[c];
    }
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = static_cast<float>(e[c] / sum);
  }
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw UsageError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

double mean(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (float v : x) s += v;
  return s / static_cast<double>(x.size());
}

double layer_norm_scale(std::span<const float> x, double eps) {
  const double mu = mean(x);
  double var = 0.0;
  for (float v : x) {
    const double d = v - mu;
    var += d * d;
  }
  var /= static_cast<double>(x.size());
  const double denom = var + eps;
  if (!(denom > 0.0)) {
    throw NumericError("layer_norm: zero variance with eps=0");
  }
  return 1.0 / std::sqrt(denom);
}

std::vector<float> layer_norm(std::span<const float> x,
                              std::span<const float> gamma,
                              std::span<const float> beta, double eps) {
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    throw UsageError("layer_norm: length mismatch (x=" + std::to_string(x.size()) +
                     ", gamma=" + std::to_string(gamma.size()) +
                     ", beta=" + std::to_string(beta.size()) + ")");
  }
  if (eps < 0.0) throw UsageError("layer_norm: eps must be non-negative");
  const double mu = mean(x);
  const double scale = layer_norm_scale(x, eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>((x[i] - mu) * scale * gamma[i] + beta[i]);
  }
  return out;
}

double gelu(double x, GeluVariant variant) {
  if (variant == GeluVariant::Erf) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  }
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

void require_finite(std::span<const float> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value in ") + what + " at flat index " +
                         std::to_string(i));
    }
  }
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

void add_in_place(Matrix& acc, const Matrix& x) {
  require_same_shape(acc, x, "add");
  auto o = acc.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += xv[i];
}

void add_row_in_place(Matrix& acc, std::span<const float> bias) {
  if (bias.size() != acc.cols()) {
    throw UsageError("bias length " + std::to_string(bias.size()) +
                     " does not match matrix cols " + std::to_string(acc.cols()));
  }
  for (std::size_t r = 0; r < acc.rows(); ++r) {
    auto row = acc.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

}  // namespace erasure
