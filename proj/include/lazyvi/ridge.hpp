#pragma once

// Ridge regression in the convention used throughout the library: minimize
//   (1/n) * sum_i (e_i - w . phi_i)^2 + lambda * ||w||^2,
// whose normal equations are (Phi^T Phi + n*lambda*I) w = Phi^T e. When the
// feature dimension M exceeds the sample count n the solve is routed through
// the dual form w = Phi^T (Phi Phi^T + n*lambda*I)^{-1} e, which is the same
// minimizer computed in the n-dimensional kernel space.

#include <cstddef>

#include "lazyvi/core.hpp"
#include "lazyvi/linalg.hpp"

namespace lazyvi {

inline Vec ridge_solve_primal(const Matrix& phi, std::span<const double> e,
                              double lambda) {
  const std::size_t n = phi.rows(), m = phi.cols();
  Matrix g = gram_tt(phi);
  const double shift = static_cast<double>(n) * lambda;
  for (std::size_t i = 0; i < m; ++i) g(i, i) += shift;
  return cholesky_solve(cholesky(g), matvec_t(phi, e));
}

inline Vec ridge_solve_dual(const Matrix& phi, std::span<const double> e,
                            double lambda) {
  const std::size_t n = phi.rows();
  Matrix k = gram_nn(phi);
  const double shift = static_cast<double>(n) * lambda;
  for (std::size_t i = 0; i < n; ++i) k(i, i) += shift;
  const Vec alpha = cholesky_solve(cholesky(k), e);
  return matvec_t(phi, alpha);
}

/// Unique minimizer of the penalized least-squares objective above.
/// Routed to whichever of the primal/dual normal equations is smaller.
inline Vec ridge_solve(const Matrix& phi, std::span<const double> e,
                       double lambda) {
  if (phi.rows() != e.size())
    throw DimensionMismatch("ridge_solve: row count != residual length");
  if (phi.rows() == 0 || phi.cols() == 0)
    throw BadSize("ridge_solve: empty system");
  if (!(lambda > 0.0)) throw OutOfRange("ridge_solve: lambda must be > 0");
  if (!phi.all_finite() || !all_finite(e))
    throw NonFiniteInput("ridge_solve: non-finite input");
  return phi.cols() <= phi.rows() ? ridge_solve_primal(phi, e, lambda)
                                  : ridge_solve_dual(phi, e, lambda);
}

}  // namespace lazyvi
