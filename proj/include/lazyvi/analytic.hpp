#pragma once

// Closed-form population quantities for linear models with Gaussian
// features. These are the ground-truth curves the estimators are checked
// against: the bivariate conditional-variance VI, the population regression
// vector, and the exact dropout-minus-retrain gap.

#include <cmath>
#include <cstddef>
#include <optional>

#include "lazyvi/core.hpp"
#include "lazyvi/linalg.hpp"

namespace lazyvi {

/// Population description of a linear problem: feature covariance, the
/// cross-moment E(XY), optionally the true coefficient vector when the
/// response is exactly linear, and the noise variance.
struct LinearModelSpec {
  Matrix sigma;                  // p x p, SPD
  Vec exy;                       // E(X Y), length p
  std::optional<Vec> beta_true;  // set when Y = X^T beta + noise
  double noise_var = 0.0;
};

/// True importance of the first variable when Y = b1*X1 + b2*X2 + noise with
/// equal feature variance sigma^2 and correlation rho:
/// b1^2 * Var(X1 | X2) = b1^2 * (1 - rho^2) * sigma^2.
inline double example1_vi(double beta1, double beta2, double rho,
                          double sigma) {
  (void)beta2;  // the second coefficient does not enter VI_1
  if (!(std::abs(rho) < 1.0))
    throw OutOfRange("example1_vi: |rho| must be < 1");
  if (!(sigma > 0.0)) throw OutOfRange("example1_vi: sigma must be > 0");
  return beta1 * beta1 * (1.0 - rho * rho) * sigma * sigma;
}

/// Population least-squares coefficients: solve Sigma * beta = E(XY).
inline Vec population_beta(const LinearModelSpec& spec) {
  if (spec.sigma.rows() != spec.exy.size())
    throw DimensionMismatch("population_beta: Sigma/E(XY) size mismatch");
  return spd_solve(spec.sigma, spec.exy);
}

namespace detail {

struct ReducedMoments {
  double sigma_jj = 0.0;
  double quad = 0.0;     // gamma^T Sigma_(j)^{-1} gamma
  double bracket = 0.0;  // E(X_j Y) - gamma^T Sigma_(j)^{-1} E(X_{-j} Y)
};

inline ReducedMoments reduced_moments(const LinearModelSpec& spec,
                                      std::size_t j) {
  const std::size_t p = spec.sigma.rows();
  if (spec.sigma.cols() != p)
    throw DimensionMismatch("reduced_moments: Sigma must be square");
  if (j >= p) throw IndexOutOfRange("reduced_moments: variable out of range");
  if (spec.exy.size() != p)
    throw DimensionMismatch("reduced_moments: E(XY) length mismatch");

  Matrix sigma_red(p - 1, p - 1);
  Vec gamma(p - 1);
  Vec exy_red(p - 1);
  std::size_t a = 0;
  for (std::size_t r = 0; r < p; ++r) {
    if (r == j) continue;
    gamma[a] = spec.sigma(j, r);
    exy_red[a] = spec.exy[r];
    std::size_t b = 0;
    for (std::size_t c = 0; c < p; ++c) {
      if (c == j) continue;
      sigma_red(a, b) = spec.sigma(r, c);
      ++b;
    }
    ++a;
  }
  const Vec solved = spd_solve(sigma_red, gamma);
  ReducedMoments m;
  m.sigma_jj = spec.sigma(j, j);
  m.quad = dot(gamma, solved);
  m.bracket = spec.exy[j] - dot(solved, exy_red);
  return m;
}

}  // namespace detail

/// Exact population difference between the dropout and retrain importance
/// estimates for variable j in the linear function class:
///   quad / (sigma_jj - quad)^2 * bracket^2
/// with quad = gamma^T Sigma_(j)^{-1} gamma and
/// bracket = E(X_j Y) - gamma^T Sigma_(j)^{-1} E(X_{-j} Y), where gamma is
/// row j of Sigma with the diagonal entry removed.
inline double dropout_retrain_gap(const LinearModelSpec& spec, std::size_t j) {
  const auto m = detail::reduced_moments(spec, j);
  const double denom = m.sigma_jj - m.quad;
  return m.quad / (denom * denom) * m.bracket * m.bracket;
}

struct LinearTruthVis {
  double vi_retrain = 0.0;  // beta_j^2 (sigma_jj - quad); the true VI
  double vi_dropout = 0.0;  // beta_j^2 sigma_jj
};

/// Both closed-form estimates when the truth is linear with known
/// coefficients. The retrain value equals the true variable importance.
inline LinearTruthVis linear_truth_vis(const LinearModelSpec& spec,
                                       std::size_t j) {
  if (!spec.beta_true)
    throw MissingBeta("linear_truth_vis: beta_true is required");
  const auto m = detail::reduced_moments(spec, j);
  const double bj = (*spec.beta_true)[j];
  return {bj * bj * (m.sigma_jj - m.quad), bj * bj * m.sigma_jj};
}

}  // namespace lazyvi
