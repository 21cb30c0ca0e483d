#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fpfm {

namespace detail {
using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EigenMap = Eigen::Map<EigenRowMat>;
using EigenConstMap = Eigen::Map<const EigenRowMat>;
}  // namespace detail

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major matrix of doubles. The only tensor type in the project;
// vectors are 1xN or Nx1 as convenient.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  bool same_shape(const DenseMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    check_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    check_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseMatrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void check_same_shape(const DenseMatrix& o, const char* op) const {
    if (!same_shape(o))
      throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_str() + " vs " +
                       o.shape_str());
  }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
inline DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
inline DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
inline DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

// C = A * B, Eigen GEMM behind the row-major storage.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  DenseMatrix c(a.rows(), b.cols());
  detail::EigenMap(c.data(), c.rows(), c.cols()).noalias() =
      detail::EigenConstMap(a.data(), a.rows(), a.cols()) *
      detail::EigenConstMap(b.data(), b.rows(), b.cols());
  return c;
}

// C = A * B^T.
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree: " + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.cols()));
  DenseMatrix c(a.rows(), b.rows());
  detail::EigenMap(c.data(), c.rows(), c.cols()).noalias() =
      detail::EigenConstMap(a.data(), a.rows(), a.cols()) *
      detail::EigenConstMap(b.data(), b.rows(), b.cols()).transpose();
  return c;
}

// C = A^T * B.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: inner dimensions disagree: " + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()));
  DenseMatrix c(a.cols(), b.cols());
  detail::EigenMap(c.data(), c.rows(), c.cols()).noalias() =
      detail::EigenConstMap(a.data(), a.rows(), a.cols()).transpose() *
      detail::EigenConstMap(b.data(), b.rows(), b.cols());
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Sum of elementwise products; the workhorse behind Gram-matrix entries.
inline double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("frobenius_dot: shape mismatch");
  const double* x = a.data();
  const double* y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double squared_norm(const DenseMatrix& a) { return frobenius_dot(a, a); }

inline std::vector<double> column_sums(const DenseMatrix& a) {
  std::vector<double> s(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += ai[j];
  }
  return s;
}

// Adds the row vector b to every row of a.
inline void add_row_vector(DenseMatrix& a, const DenseMatrix& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row_vector: shape mismatch");
  const double* bv = b.row(0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ai = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) ai[j] += bv[j];
  }
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace fpfm
