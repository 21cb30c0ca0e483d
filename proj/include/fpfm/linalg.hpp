#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/matrix.hpp"

namespace fpfm {

struct SingularSystemError : std::runtime_error {
  explicit SingularSystemError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

// In-place lower Cholesky. Returns false on a non-positive pivot.
inline bool cholesky_lower(DenseMatrix& a, double pivot_floor) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > pivot_floor)) return false;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      const double* li = a.row(i);
      const double* lj = a.row(j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      a(i, j) = s / ljj;
    }
  }
  return true;
}

inline std::vector<double> cholesky_solve(const DenseMatrix& l, const std::vector<double>& b) {
  const std::size_t n = b.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const double* li = l.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * y[k];
    y[i] = s / li[i];
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

// Partial-pivot LU solve; throws when the best pivot falls below the floor.
inline std::vector<double> lu_solve(DenseMatrix a, std::vector<double> b, double pivot_floor) {
  const std::size_t n = a.rows();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(a(col, col));
    for (std::size_t i = col + 1; i < n; ++i) {
      const double v = std::abs(a(i, col));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (!(best > pivot_floor))
      throw SingularSystemError(
          "linear system numerically singular (pivot " + std::to_string(best) +
          " at column " + std::to_string(col) + "); supply a ridge lambda > 0");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(col, j));
      std::swap(b[piv], b[col]);
    }
    const double inv = 1.0 / a(col, col);
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = a(i, col) * inv;
      if (f == 0.0) continue;
      a(i, col) = 0.0;
      const double* ac = a.row(col);
      double* ai = a.row(i);
      for (std::size_t j = col + 1; j < n; ++j) ai[j] -= f * ac[j];
      b[i] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    const double* ai = a.row(ii);
    for (std::size_t j = ii + 1; j < n; ++j) s -= ai[j] * x[j];
    x[ii] = s / ai[ii];
  }
  return x;
}

}  // namespace detail

// Solves (G + lambda*I) c = b for symmetric G. Cholesky first, LU fallback.
inline std::vector<double> solve_ridge(const DenseMatrix& g, const std::vector<double>& b,
                                       double lambda) {
  const std::size_t k = g.rows();
  if (g.cols() != k) throw ShapeError("solve_ridge: G must be square");
  if (b.size() != k) throw ShapeError("solve_ridge: b length does not match G");
  if (lambda < 0.0) throw std::invalid_argument("solve_ridge: lambda must be >= 0");

  double scale = 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) scale = std::max(scale, std::abs(g.data()[i]));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (std::abs(g(i, j) - g(j, i)) > 1e-9 * scale)
        throw std::invalid_argument("solve_ridge: G is not symmetric within 1e-9");

  DenseMatrix a = g;
  for (std::size_t i = 0; i < k; ++i) a(i, i) += lambda;

  constexpr double kPivotFloor = 1e-12;
  DenseMatrix chol = a;
  if (detail::cholesky_lower(chol, 0.0)) {
    bool ok = true;
    for (std::size_t i = 0; i < k && ok; ++i) ok = chol(i, i) * chol(i, i) > kPivotFloor;
    if (ok) return detail::cholesky_solve(chol, b);
  }
  if (lambda == 0.0)
    throw SingularSystemError(
        "Gram system numerically singular (Cholesky pivot below 1e-12 with lambda = 0); "
        "supply a ridge lambda > 0");
  return detail::lu_solve(a, b, kPivotFloor);
}

// True when G + lambda*I admits a Cholesky factorization with all pivots > 0.
inline bool is_positive_definite(const DenseMatrix& g, double lambda = 0.0) {
  DenseMatrix a = g;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += lambda;
  return detail::cholesky_lower(a, 0.0);
}

}  // namespace fpfm
