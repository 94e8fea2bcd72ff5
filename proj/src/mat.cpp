#include "sgnn/mat.hpp"

#include <cmath>
#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

namespace {

std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw ShapeError("Mat: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Mat out(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

Mat Mat::row_vector(std::span<const double> values) {
  return Mat(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Mat Mat::identity(std::size_t n) {
  Mat out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
  Mat out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = ai[k];
      if (s == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < n; ++j) o[j] += s * bk[j];
    }
  }
  return out;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + shape_of(a) + "^T * " + shape_of(b));
  Mat out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = ak[i];
      if (s == 0.0) continue;
      double* o = out.row(i);
      for (std::size_t j = 0; j < n; ++j) o[j] += s * bk[j];
    }
  }
  return out;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + shape_of(a) + " * " + shape_of(b) + "^T");
  // Same row-axpy order as matmul, against an explicit transpose.
  return matmul(a, transpose(b));
}

Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Mat operator+(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "add");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Mat operator-(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "sub");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Mat operator*(double s, const Mat& a) {
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "hadamard");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Mat& operator+=(Mat& a, const Mat& b) {
  require_same_shape(a, b, "add_assign");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Mat add_row(const Mat& a, const Mat& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ShapeError("add_row: " + shape_of(a) + " + row " + shape_of(bias));
  Mat out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* o = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) o[j] += bias[j];
  }
  return out;
}

Mat column_sums(const Mat& a) {
  Mat out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j];
  }
  return out;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::fmax(m, std::fabs(v));
  return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::fmax(m, std::fabs(a[i] - b[i]));
  return m;
}

bool all_finite(const Mat& a) {
  for (double v : a.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace sgnn
