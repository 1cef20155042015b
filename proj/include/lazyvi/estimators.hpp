#pragma once

// The three variable-importance estimators plus the early-stopped variant.
//
//   dropout  — plug mean-imputed features into the unchanged full model.
//   retrain  — fit a fresh network on the mean-imputed training data.
//   lazy     — ridge-regress the dropout residuals on the gradient features
//              of the full model and add the learned parameter correction;
//              the penalty is chosen by K-fold cross-validation unless the
//              candidate grid has a single entry.
//
// Every estimator reports a Wald confidence interval whose standard error
// comes from the per-sample skill differences t_i on the held-out split:
// for negative MSE, t_i = (y_i - reduced(x_i^{(j)}))^2 - (y_i - full(x_i))^2,
// and tau is the standard deviation of the mean of t.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/network.hpp"
#include "lazyvi/ridge.hpp"
#include "lazyvi/stats.hpp"

namespace lazyvi {

enum class SkillKind { neg_mse, accuracy };

inline std::string to_string(SkillKind k) {
  return k == SkillKind::neg_mse ? "neg_mse" : "accuracy";
}

template <class F>
concept Predictor = requires(F f, std::span<const double> x) {
  { f(x) } -> std::convertible_to<double>;
};

namespace detail {

// Classification threshold sits at 0.5; a prediction of exactly 0.5 counts
// as class 1.
inline bool predicted_class(double pred) { return pred >= 0.5; }
inline bool actual_class(double y) { return y >= 0.5; }

inline double skill_of(std::span<const double> pred,
                       std::span<const double> y, SkillKind kind) {
  const std::size_t n = y.size();
  if (kind == SkillKind::neg_mse) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - pred[i];
      s += r * r;
    }
    return -s / static_cast<double>(n);
  }
  double correct = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (predicted_class(pred[i]) == actual_class(y[i])) correct += 1.0;
  return correct / static_cast<double>(n);
}

inline Vec predict_all(const MlpModel& m, const Matrix& x) {
  MlpScratch ws;
  ws.resize(m.config);
  const auto layers = layer_views(m.config);
  Vec out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    out[i] = forward_into(m, layers, x.row(i), ws);
  return out;
}

}  // namespace detail

/// Predictive skill of an arbitrary predictor over a dataset: negative mean
/// squared error, or 0.5-threshold classification accuracy.
template <Predictor F>
double eval_skill(F&& predict, const Dataset& d, SkillKind kind) {
  if (d.n() == 0) throw EmptyDataset("eval_skill: empty dataset");
  Vec pred(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) pred[i] = predict(d.X.row(i));
  return detail::skill_of(pred, d.Y, kind);
}

inline double eval_skill(const MlpModel& m, const Dataset& d, SkillKind kind) {
  if (d.n() == 0) throw EmptyDataset("eval_skill: empty dataset");
  const Vec pred = detail::predict_all(m, d.X);
  return detail::skill_of(pred, d.Y, kind);
}

/// Per-sample skill differences between the reduced and full predictions,
/// the raw material for the plug-in variance.
inline Vec per_sample_skill_diffs(std::span<const double> full_pred,
                                  std::span<const double> reduced_pred,
                                  std::span<const double> y, SkillKind kind) {
  Vec t(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (kind == SkillKind::neg_mse) {
      const double rf = y[i] - full_pred[i];
      const double rr = y[i] - reduced_pred[i];
      t[i] = rr * rr - rf * rf;
    } else {
      const bool fc =
          detail::predicted_class(full_pred[i]) == detail::actual_class(y[i]);
      const bool rc = detail::predicted_class(reduced_pred[i]) ==
                      detail::actual_class(y[i]);
      t[i] = (rc ? 1.0 : 0.0) - (fc ? 1.0 : 0.0);
    }
  }
  return t;
}

/// Standard error of the mean of the per-sample differences.
inline double tau_from_diffs(std::span<const double> t) {
  if (t.empty()) return 0.0;
  return std::sqrt(population_variance(t) / static_cast<double>(t.size()));
}

/// Two-sided Wald interval vi_hat +/- z_{alpha/2} * tau_hat.
inline std::pair<double, double> wald_ci(double vi_hat, double tau_hat,
                                         double alpha) {
  if (!(tau_hat >= 0.0)) throw OutOfRange("wald_ci: tau_hat must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw OutOfRange("wald_ci: alpha must lie in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return {vi_hat - z * tau_hat, vi_hat + z * tau_hat};
}

enum class ViMethod { dropout, retrain, lazy, lazy_es };

inline std::string to_string(ViMethod m) {
  switch (m) {
    case ViMethod::dropout: return "dropout";
    case ViMethod::retrain: return "retrain";
    case ViMethod::lazy: return "lazy";
    case ViMethod::lazy_es: return "lazy_es";
  }
  return "?";
}

struct ViEstimate {
  std::size_t variable = 0;  // feature index, 0-based
  double vi_hat = 0.0;
  double tau_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.05;
  double seconds = 0.0;
  ViMethod method = ViMethod::dropout;
  std::optional<double> lambda_used;
};

struct LazyConfig {
  Vec lambda_grid;           // candidate penalties; single entry skips CV
  std::size_t cv_folds = 5;  // K
  double alpha = 0.05;
};

/// Grid spanning two decades around the sqrt(n)-scaled penalty the theory
/// asks for: {0.01, 0.1, 1, 10, 100} * sqrt(n1 / 1000).
inline Vec default_lambda_grid(std::size_t n1) {
  const double scale = std::sqrt(static_cast<double>(n1) / 1000.0);
  return {0.01 * scale, 0.1 * scale, 1.0 * scale, 10.0 * scale, 100.0 * scale};
}

namespace detail {

struct Stopwatch {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

struct LazyFit {
  Vec delta_theta;
  double lambda = 0.0;
};

// K-fold CV over the candidate grid, exactly as the fold scheme prescribes:
// the fold partition (round-robin over row order) is fixed across lambdas,
// each held-in fit minimizes the mean squared residual plus lambda times the
// squared norm, and held-out error is measured through the full network at
// theta_f + delta. Ties break toward the larger lambda.
inline double cv_lambda_on_features(const MlpModel& full, const Matrix& phi,
                                    const Vec& e, const Dataset& train_t,
                                    const LazyConfig& cfg) {
  const std::size_t n1 = phi.rows(), mdim = phi.cols();
  const std::size_t k_folds = cfg.cv_folds;
  if (k_folds < 2 || k_folds > n1)
    throw BadFoldCount("cv_lambda: need 2 <= K <= n1, got K = " +
                       std::to_string(k_folds));
  if (cfg.lambda_grid.empty()) throw BadSize("cv_lambda: empty lambda grid");

  Vec grid = cfg.lambda_grid;
  std::sort(grid.begin(), grid.end());

  std::vector<std::vector<std::size_t>> fold_rows(k_folds);
  for (std::size_t i = 0; i < n1; ++i) fold_rows[i % k_folds].push_back(i);

  const auto layers = layer_views(full.config);
  MlpScratch ws;
  ws.resize(full.config);
  MlpModel shifted = full;

  std::vector<double> cv_err(grid.size(), 0.0);

  const bool primal = mdim <= n1;
  if (primal) {
    // Per-fold Gram blocks; a leave-one-fold-out system is the sum of the
    // other folds' blocks, so each fold/lambda pair costs one Cholesky.
    std::vector<Matrix> g_fold(k_folds);
    std::vector<Vec> b_fold(k_folds);
    for (std::size_t k = 0; k < k_folds; ++k) {
      Matrix g(mdim, mdim);
      Vec b(mdim, 0.0);
      for (std::size_t i : fold_rows[k]) {
        const auto r = phi.row(i);
        for (std::size_t a = 0; a < mdim; ++a) {
          const double ra = r[a];
          if (ra == 0.0) continue;
          double* grow = &g(a, 0);
          for (std::size_t c = a; c < mdim; ++c) grow[c] += ra * r[c];
          b[a] += ra * e[i];
        }
      }
      for (std::size_t a = 0; a < mdim; ++a)
        for (std::size_t c = 0; c < a; ++c) g(a, c) = g(c, a);
      g_fold[k] = std::move(g);
      b_fold[k] = std::move(b);
    }
    for (std::size_t k = 0; k < k_folds; ++k) {
      Matrix g_minus(mdim, mdim);
      Vec b_minus(mdim, 0.0);
      std::size_t m_rows = 0;
      for (std::size_t k2 = 0; k2 < k_folds; ++k2) {
        if (k2 == k) continue;
        m_rows += fold_rows[k2].size();
        const auto& gd = g_fold[k2].data();
        auto& dst = g_minus.data();
        for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += gd[q];
        for (std::size_t q = 0; q < mdim; ++q) b_minus[q] += b_fold[k2][q];
      }
      for (std::size_t li = 0; li < grid.size(); ++li) {
        Matrix a = g_minus;
        const double shift = static_cast<double>(m_rows) * grid[li];
        for (std::size_t q = 0; q < mdim; ++q) a(q, q) += shift;
        const Vec delta = cholesky_solve(cholesky(a), b_minus);
        for (std::size_t q = 0; q < mdim; ++q)
          shifted.theta[q] = full.theta[q] + delta[q];
        double err = 0.0;
        for (std::size_t i : fold_rows[k]) {
          const double r =
              forward_into(shifted, layers, train_t.X.row(i), ws) -
              train_t.Y[i];
          err += r * r;
        }
        cv_err[li] += err / static_cast<double>(fold_rows[k].size());
      }
    }
  } else {
    // Wide regime: solve in the kernel space of held-in rows.
    const Matrix k_full = gram_nn(phi);
    for (std::size_t k = 0; k < k_folds; ++k) {
      std::vector<std::size_t> held_in;
      held_in.reserve(n1 - fold_rows[k].size());
      for (std::size_t k2 = 0; k2 < k_folds; ++k2)
        if (k2 != k)
          held_in.insert(held_in.end(), fold_rows[k2].begin(),
                         fold_rows[k2].end());
      std::sort(held_in.begin(), held_in.end());
      const std::size_t m_rows = held_in.size();
      Matrix k_sub(m_rows, m_rows);
      Vec e_sub(m_rows);
      for (std::size_t a = 0; a < m_rows; ++a) {
        e_sub[a] = e[held_in[a]];
        for (std::size_t b = 0; b < m_rows; ++b)
          k_sub(a, b) = k_full(held_in[a], held_in[b]);
      }
      for (std::size_t li = 0; li < grid.size(); ++li) {
        Matrix a = k_sub;
        const double shift = static_cast<double>(m_rows) * grid[li];
        for (std::size_t q = 0; q < m_rows; ++q) a(q, q) += shift;
        const Vec alpha = cholesky_solve(cholesky(a), e_sub);
        std::fill(shifted.theta.begin(), shifted.theta.end(), 0.0);
        for (std::size_t a2 = 0; a2 < m_rows; ++a2) {
          const double c = alpha[a2];
          if (c == 0.0) continue;
          const auto r = phi.row(held_in[a2]);
          for (std::size_t q = 0; q < r.size(); ++q) shifted.theta[q] += c * r[q];
        }
        for (std::size_t q = 0; q < shifted.theta.size(); ++q)
          shifted.theta[q] += full.theta[q];
        double err = 0.0;
        for (std::size_t i : fold_rows[k]) {
          const double r =
              forward_into(shifted, layers, train_t.X.row(i), ws) -
              train_t.Y[i];
          err += r * r;
        }
        cv_err[li] += err / static_cast<double>(fold_rows[k].size());
      }
    }
  }

  for (double& v : cv_err) v /= static_cast<double>(k_folds);
  std::size_t best = 0;
  for (std::size_t li = 1; li < grid.size(); ++li)
    if (cv_err[li] <= cv_err[best]) best = li;  // ties toward larger lambda
  return grid[best];
}

// Residual-on-gradient-features ridge fit. train_t must already carry the
// imputation transform.
inline LazyFit lazy_fit(const MlpModel& full, const Dataset& train_t,
                        const LazyConfig& cfg) {
  if (cfg.lambda_grid.empty()) throw BadSize("lazy fit: empty lambda grid");
  const Matrix phi = gradient_features(full, train_t.X);
  const Vec pred = predict_all(full, train_t.X);
  Vec e(train_t.n());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = train_t.Y[i] - pred[i];
  if (!all_finite(e)) throw NonFiniteInput("lazy fit: non-finite residuals");

  LazyFit fit;
  fit.lambda = cfg.lambda_grid.size() == 1
                   ? cfg.lambda_grid.front()
                   : cv_lambda_on_features(full, phi, e, train_t, cfg);
  fit.delta_theta = ridge_solve(phi, e, fit.lambda);
  return fit;
}

inline ViEstimate assemble_estimate(std::size_t j, ViMethod method,
                                    const Vec& full_pred, const Vec& red_pred,
                                    const Dataset& test, SkillKind kind,
                                    double alpha, Vec* t_out) {
  const double v_full = skill_of(full_pred, test.Y, kind);
  const double v_red = skill_of(red_pred, test.Y, kind);
  ViEstimate est;
  est.variable = j;
  est.method = method;
  est.vi_hat = v_full - v_red;
  const Vec t = per_sample_skill_diffs(full_pred, red_pred, test.Y, kind);
  est.tau_hat = tau_from_diffs(t);
  est.alpha = alpha;
  std::tie(est.ci_lo, est.ci_hi) = wald_ci(est.vi_hat, est.tau_hat, alpha);
  if (t_out) *t_out = t;
  return est;
}

}  // namespace detail

/// Plug-in estimate: the full model evaluated on mean-imputed test features.
inline ViEstimate vi_dropout(const MlpModel& full, const Split& sp,
                             std::size_t j, SkillKind kind,
                             double alpha = 0.05, Vec* t_out = nullptr) {
  detail::Stopwatch clock;
  const Dataset test_t = dropout_transform(sp.test, j);
  const Vec full_pred = detail::predict_all(full, sp.test.X);
  const Vec red_pred = detail::predict_all(full, test_t.X);
  ViEstimate est = detail::assemble_estimate(
      j, ViMethod::dropout, full_pred, red_pred, sp.test, kind, alpha, t_out);
  est.seconds = clock.seconds();
  return est;
}

/// Reference estimate: a fresh network of the same architecture trained on
/// the mean-imputed training data. Wall clock covers the per-variable
/// marginal cost (reduced training + evaluation), not the shared full fit.
inline ViEstimate vi_retrain(const MlpModel& full, const Split& sp,
                             std::size_t j, SkillKind kind,
                             const TrainOptions& opts, double alpha = 0.05,
                             Vec* t_out = nullptr) {
  detail::Stopwatch clock;
  const Dataset train_t = dropout_transform(sp.train, j);
  const Dataset test_t = dropout_transform(sp.test, j);
  const MlpModel reduced = train(init(full.config, opts.seed), train_t, opts);
  const Vec full_pred = detail::predict_all(full, sp.test.X);
  const Vec red_pred = detail::predict_all(reduced, test_t.X);
  ViEstimate est = detail::assemble_estimate(
      j, ViMethod::retrain, full_pred, red_pred, sp.test, kind, alpha, t_out);
  est.seconds = clock.seconds();
  return est;
}

/// Lazy estimate: ridge-regress the dropout residuals on the gradient
/// features over the training split, add the correction to the full
/// parameters, and score the corrected network on the imputed test split.
inline ViEstimate vi_lazy(const MlpModel& full, const Split& sp, std::size_t j,
                          SkillKind kind, const LazyConfig& cfg,
                          Vec* t_out = nullptr) {
  detail::Stopwatch clock;
  const Dataset train_t = dropout_transform(sp.train, j);
  const Dataset test_t = dropout_transform(sp.test, j);
  const detail::LazyFit fit = detail::lazy_fit(full, train_t, cfg);
  MlpModel reduced = full;
  for (std::size_t q = 0; q < reduced.theta.size(); ++q)
    reduced.theta[q] += fit.delta_theta[q];
  const Vec full_pred = detail::predict_all(full, sp.test.X);
  const Vec red_pred = detail::predict_all(reduced, test_t.X);
  ViEstimate est = detail::assemble_estimate(
      j, ViMethod::lazy, full_pred, red_pred, sp.test, kind, cfg.alpha, t_out);
  est.lambda_used = fit.lambda;
  est.seconds = clock.seconds();
  return est;
}

/// Chosen ridge penalty for variable j by K-fold cross-validation on the
/// corrected network's held-out squared error.
inline double cv_lambda(const MlpModel& full, const Dataset& train,
                        std::size_t j, const LazyConfig& cfg) {
  if (cfg.lambda_grid.empty()) throw BadSize("cv_lambda: empty lambda grid");
  if (cfg.lambda_grid.size() == 1) return cfg.lambda_grid.front();
  const Dataset train_t = dropout_transform(train, j);
  const Matrix phi = gradient_features(full, train_t.X);
  const Vec pred = detail::predict_all(full, train_t.X);
  Vec e(train_t.n());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = train_t.Y[i] - pred[i];
  return detail::cv_lambda_on_features(full, phi, e, train_t, cfg);
}

/// Early-stopped variant: instead of the ridge correction, run exactly
/// `steps` full-batch updates on the imputed training data starting from the
/// full model parameters.
inline ViEstimate vi_lazy_es(const MlpModel& full, const Split& sp,
                             std::size_t j, SkillKind kind, std::size_t steps,
                             double learning_rate, double alpha = 0.05,
                             Vec* t_out = nullptr) {
  if (steps == 0) throw BadSteps("vi_lazy_es: steps must be >= 1");
  detail::Stopwatch clock;
  const Dataset train_t = dropout_transform(sp.train, j);
  const Dataset test_t = dropout_transform(sp.test, j);
  TrainOptions opts;
  opts.learning_rate = learning_rate;
  opts.early_stop_steps = steps;
  const MlpModel reduced = train(full, train_t, opts);
  const Vec full_pred = detail::predict_all(full, sp.test.X);
  const Vec red_pred = detail::predict_all(reduced, test_t.X);
  ViEstimate est = detail::assemble_estimate(
      j, ViMethod::lazy_es, full_pred, red_pred, sp.test, kind, alpha, t_out);
  est.seconds = clock.seconds();
  return est;
}

inline nlohmann::json to_json(const ViEstimate& e) {
  nlohmann::json j{{"variable", e.variable + 1},
                   {"method", to_string(e.method)},
                   {"vi", e.vi_hat},
                   {"se", e.tau_hat},
                   {"ci_lo", e.ci_lo},
                   {"ci_hi", e.ci_hi},
                   {"alpha", e.alpha},
                   {"seconds", e.seconds}};
  if (e.lambda_used)
    j["lambda"] = *e.lambda_used;
  else
    j["lambda"] = nullptr;
  return j;
}

/// Tidy table of estimates; variables are reported 1-based.
inline std::string estimates_csv(const std::vector<ViEstimate>& rows) {
  std::string out = "variable,method,vi,se,ci_lo,ci_hi,lambda,seconds\n";
  char buf[512];
  for (const auto& e : rows) {
    std::string lambda;
    if (e.lambda_used) {
      char lb[64];
      std::snprintf(lb, sizeof lb, "%.17g", *e.lambda_used);
      lambda = lb;
    }
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.17g,%s,%.6f\n",
                  e.variable + 1, to_string(e.method).c_str(), e.vi_hat,
                  e.tau_hat, e.ci_lo, e.ci_hi, lambda.c_str(), e.seconds);
    out += buf;
  }
  return out;
}

}  // namespace lazyvi
