#pragma once

// Statistical primitives: the standard normal distribution pair
// (cdf/quantile), moment helpers, multivariate normal sampling and a tiny
// least-squares line fit used by the kernel-trace diagnostic.

#include <cmath>
#include <cstddef>
#include <span>

#include "lazyvi/core.hpp"
#include "lazyvi/linalg.hpp"

namespace lazyvi {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730951);
}

/// Inverse standard normal CDF. Rational approximation refined with one
/// Halley step, accurate to well below the 1e-9 contract.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw OutOfRange("normal_quantile: p must lie in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step against the exact erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Population variance (divides by n), matching the plug-in variance used by
/// the per-sample Wald machinery.
inline double population_variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

/// Unbiased sample variance (divides by n-1).
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sample_sd(std::span<const double> v) {
  return std::sqrt(sample_variance(v));
}

inline double covariance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionMismatch("covariance: need two equal-length samples");
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

inline double correlation(std::span<const double> a,
                          std::span<const double> b) {
  const double c = covariance(a, b);
  const double sa = sample_sd(a), sb = sample_sd(b);
  return c / (sa * sb);
}

/// Draw n i.i.d. rows from N(mean, sigma). Returns an n x p matrix; n = 0
/// yields an empty 0 x p matrix.
inline Matrix mvn_sample(std::span<const double> mu, const Matrix& sigma,
                         std::size_t n, RngSeed seed) {
  const std::size_t p = mu.size();
  if (sigma.rows() != p || sigma.cols() != p)
    throw DimensionMismatch("mvn_sample: covariance shape mismatch");
  const Matrix l = cholesky(sigma);
  Matrix x(n, p);
  Rng rng(seed);
  Vec z(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) z[j] = rng.normal();
    auto row = x.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      double s = mu[j];
      for (std::size_t k = 0; k <= j; ++k) s += l(j, k) * z[k];
      row[j] = s;
    }
  }
  return x;
}

/// Least-squares line y = intercept + slope * x with coefficient of
/// determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

inline LinearFit fit_line(std::span<const double> x,
                          std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DimensionMismatch("fit_line: need two equal-length samples");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

}  // namespace lazyvi
