#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "uctrl/errors.hpp"

namespace uctrl {

// Dense row-major double matrix. Deliberately minimal: everything the rate
// and model modules need, nothing more.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw DimensionMismatch("Matrix: negative dims");
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return v_.size(); }

  double& operator()(int i, int j) { return v_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return v_[static_cast<size_t>(i) * cols_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double* row_ptr(int i) { return v_.data() + static_cast<size_t>(i) * cols_; }
  const double* row_ptr(int i) const { return v_.data() + static_cast<size_t>(i) * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool is_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  double frobenius() const {
    double s = 0.0;
    for (double x : v_) s += x * x;
    return std::sqrt(s);
  }

  std::vector<double> col(int j) const {
    std::vector<double> c(rows_);
    for (int i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  void set_col(int j, const std::vector<double>& c) {
    for (int i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
  }

  double col_norm(int j) const {
    double s = 0.0;
    for (int i = 0; i < rows_; ++i) {
      double x = (*this)(i, j);
      s += x * x;
    }
    return std::sqrt(s);
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (!a.same_shape(b))
    throw DimensionMismatch(std::string(where) + ": shape mismatch " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// C = A * B, ikj loop order for row-major locality.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dims differ");
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double* ci = c.row_ptr(i);
    for (int k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.row_ptr(k);
      for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// C = A^T * B.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("matmul_tn: inner dims differ");
  Matrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    const double* ak = a.row_ptr(k);
    const double* bk = b.row_ptr(k);
    for (int i = 0; i < a.cols(); ++i) {
      double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row_ptr(i);
      for (int j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

// C = A * B^T.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionMismatch("matmul_nt: inner dims differ");
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (int j = 0; j < b.rows(); ++j) {
      const double* bj = b.row_ptr(j);
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

// A * A^T, the d x d Gram of a d x N batch.
inline Matrix gram_nt(const Matrix& a) { return matmul_nt(a, a); }

// A^T * A, the N x N Gram.
inline Matrix gram_tn(const Matrix& a) { return matmul_tn(a, a); }

inline Matrix add(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "add");
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "sub");
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline void add_in_place(Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "add_in_place");
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

inline void axpy_in_place(Matrix& a, double alpha, const Matrix& b) {
  check_same_shape(a, b, "axpy_in_place");
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] += alpha * b.data()[i];
}

inline Matrix scaled(const Matrix& a, double s) {
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}

inline void scale_in_place(Matrix& a, double s) {
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] *= s;
}

// [A B] column concatenation; A and B share a row count.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("hcat: row counts differ");
  Matrix c(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
    for (int j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
  }
  return c;
}

inline Matrix cols_range(const Matrix& a, int j0, int j1) {
  if (j0 < 0 || j1 < j0 || j1 > a.cols()) throw IndexOutOfRange("cols_range");
  Matrix c(a.rows(), j1 - j0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = j0; j < j1; ++j) c(i, j - j0) = a(i, j);
  return c;
}

inline Matrix select_cols(const Matrix& a, const std::vector<int>& idx) {
  Matrix c(a.rows(), static_cast<int>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.cols()) throw IndexOutOfRange("select_cols");
    for (int i = 0; i < a.rows(); ++i) c(i, static_cast<int>(j)) = a(i, idx[j]);
  }
  return c;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: lengths differ");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void check_finite(const Matrix& a, const char* where) {
  if (!a.is_finite()) throw NonFiniteValue(std::string(where) + ": non-finite entry");
}

}  // namespace uctrl
