#pragma once

// Dense symmetric linear algebra: Cholesky factorization, SPD solves and the
// Gram products used by the ridge machinery. Direct methods only; problem
// sizes are desk-scale (a few thousand at most) and determinism matters more
// than peak flops.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "lazyvi/core.hpp"

namespace lazyvi {

/// Cholesky factor L (lower triangular) with A = L * L^T.
/// Reads the lower triangle of A. A pivot at or below 1e-10 relative to the
/// largest diagonal entry signals a degenerate matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("cholesky: matrix must be square");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double tol = 1e-10 * std::max(1.0, max_diag);

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > tol)) {
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(d) +
                                " at index " + std::to_string(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Solve A x = b given the Cholesky factor L of A.
inline Vec cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw DimensionMismatch("cholesky_solve: size mismatch");
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vec x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

/// Solve A x = b for symmetric positive definite A.
inline Vec spd_solve(const Matrix& a, std::span<const double> b) {
  return cholesky_solve(cholesky(a), b);
}

/// Phi^T Phi (M x M), accumulated from row outer products so memory access
/// stays sequential for row-major Phi.
inline Matrix gram_tt(const Matrix& phi) {
  const std::size_t n = phi.rows(), m = phi.cols();
  Matrix g(m, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = phi.row(i);
    for (std::size_t a = 0; a < m; ++a) {
      const double ra = r[a];
      if (ra == 0.0) continue;
      double* grow = &g(a, 0);
      for (std::size_t b = a; b < m; ++b) grow[b] += ra * r[b];
    }
  }
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < a; ++b) g(a, b) = g(b, a);
  return g;
}

/// Phi Phi^T (n x n) via row-row dot products.
inline Matrix gram_nn(const Matrix& phi) {
  const std::size_t n = phi.rows();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(phi.row(i), phi.row(j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Phi^T v (length M).
inline Vec matvec_t(const Matrix& phi, std::span<const double> v) {
  if (v.size() != phi.rows())
    throw DimensionMismatch("matvec_t: size mismatch");
  Vec out(phi.cols(), 0.0);
  for (std::size_t i = 0; i < phi.rows(); ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const auto r = phi.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += vi * r[j];
  }
  return out;
}

/// Phi v (length n).
inline Vec matvec(const Matrix& phi, std::span<const double> v) {
  if (v.size() != phi.cols()) throw DimensionMismatch("matvec: size mismatch");
  Vec out(phi.rows());
  for (std::size_t i = 0; i < phi.rows(); ++i) out[i] = dot(phi.row(i), v);
  return out;
}

}  // namespace lazyvi
