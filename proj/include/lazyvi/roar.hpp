#pragma once

// Remove-and-retrain evaluation: rank features with a saliency method,
// impute increasing proportions of them to their training means, and track
// the test MSE under three refit strategies (plug-in dropout, fresh retrain,
// lazy correction). One full-model training is shared across the whole
// curve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/estimators.hpp"
#include "lazyvi/network.hpp"

namespace lazyvi {

struct Ordering {
  std::vector<std::size_t> ranked;  // feature indices, most important first
  std::string source;               // "grad" | "random" | "given"
};

/// Rank features by mean absolute input gradient over the dataset,
/// descending; ties break toward the smaller index.
inline Ordering grad_saliency(const MlpModel& model, const Dataset& d) {
  if (model.config.input_dim != d.p())
    throw DimensionMismatch("grad_saliency: model input dim != p");
  const std::size_t p = d.p();
  Vec importance(p, 0.0);
  detail::MlpScratch ws;
  ws.resize(model.config);
  const auto layers = detail::layer_views(model.config);
  for (std::size_t i = 0; i < d.n(); ++i) {
    detail::forward_into(model, layers, d.X.row(i), ws);
    detail::backward_into(model, layers, ws, 1.0, nullptr);
    for (std::size_t j = 0; j < p; ++j) importance[j] += std::abs(ws.grad[0][j]);
  }
  for (double& v : importance) v /= static_cast<double>(std::max<std::size_t>(1, d.n()));

  Ordering ord;
  ord.source = "grad";
  ord.ranked.resize(p);
  std::iota(ord.ranked.begin(), ord.ranked.end(), 0);
  std::sort(ord.ranked.begin(), ord.ranked.end(),
            [&](std::size_t a, std::size_t b) {
              if (importance[a] != importance[b])
                return importance[a] > importance[b];
              return a < b;
            });
  return ord;
}

/// Uniformly random permutation of the features.
inline Ordering random_ordering(std::size_t p, RngSeed seed) {
  Ordering ord;
  ord.source = "random";
  ord.ranked.resize(p);
  std::iota(ord.ranked.begin(), ord.ranked.end(), 0);
  Rng rng(seed);
  for (std::size_t j = p; j-- > 1;)
    std::swap(ord.ranked[j], ord.ranked[rng.uniform_below(j + 1)]);
  return ord;
}

struct RoarOptions {
  TrainOptions train;  // shared full fit and the per-step retrains
  LazyConfig lazy{{}, 5, 0.05};  // empty grid = sqrt(n1)-scaled default
};

struct RoarPoint {
  double t = 0.0;
  std::string method;
  double mse = 0.0;
  double seconds = 0.0;
};

struct RoarCurve {
  std::vector<double> ts;  // ascending
  std::vector<RoarPoint> points;
  double full_mse = 0.0;

  double total_seconds(const std::string& method) const {
    double s = 0.0;
    for (const auto& pt : points)
      if (pt.method == method) s += pt.seconds;
    return s;
  }
};

/// Degradation curve from an already-trained full model: for each proportion
/// t, impute the top ceil(t*p) ranked features and measure test MSE per
/// refit method. With nothing removed all methods score the full model
/// exactly.
inline RoarCurve roar_curve(const MlpModel& full, const Split& sp,
                            const Ordering& ordering,
                            const std::vector<double>& ts,
                            const std::vector<std::string>& methods,
                            const RoarOptions& opts) {
  const std::size_t p = sp.train.p();
  if (ordering.ranked.size() != p)
    throw DimensionMismatch("roar_curve: ordering size != p");
  for (double t : ts)
    if (!(t >= 0.0 && t <= 1.0))
      throw OutOfRange("roar_curve: proportions must lie in [0,1]");
  for (const auto& m : methods)
    if (m != "dropout" && m != "retrain" && m != "lazy")
      throw ConfigError("roar_curve: unknown method '" + m + "'");

  RoarCurve curve;
  curve.ts = ts;
  std::sort(curve.ts.begin(), curve.ts.end());
  curve.full_mse = -eval_skill(full, sp.test, SkillKind::neg_mse);

  LazyConfig lazy_cfg = opts.lazy;
  if (lazy_cfg.lambda_grid.empty())
    lazy_cfg.lambda_grid = default_lambda_grid(sp.train.n());

  for (double t : curve.ts) {
    const std::size_t k = std::min<std::size_t>(
        p, static_cast<std::size_t>(std::ceil(t * static_cast<double>(p))));
    if (k == 0) {
      for (const auto& m : methods)
        curve.points.push_back({t, m, curve.full_mse, 0.0});
      continue;
    }
    const std::vector<std::size_t> removed(ordering.ranked.begin(),
                                           ordering.ranked.begin() +
                                               static_cast<std::ptrdiff_t>(k));
    const Dataset train_t = impute_features(sp.train, removed);
    const Dataset test_t = impute_features(sp.test, removed);
    for (const auto& m : methods) {
      detail::Stopwatch clock;
      double mse = 0.0;
      if (m == "dropout") {
        mse = -eval_skill(full, test_t, SkillKind::neg_mse);
      } else if (m == "retrain") {
        const MlpModel reduced =
            train(init(full.config, opts.train.seed), train_t, opts.train);
        mse = -eval_skill(reduced, test_t, SkillKind::neg_mse);
      } else {
        const detail::LazyFit fit = detail::lazy_fit(full, train_t, lazy_cfg);
        MlpModel reduced = full;
        for (std::size_t q = 0; q < reduced.theta.size(); ++q)
          reduced.theta[q] += fit.delta_theta[q];
        mse = -eval_skill(reduced, test_t, SkillKind::neg_mse);
      }
      curve.points.push_back({t, m, mse, clock.seconds()});
    }
  }
  return curve;
}

/// Convenience overload: trains the shared full model from the given
/// architecture, then walks the curve.
inline RoarCurve roar_curve(const NetworkConfig& config, const Split& sp,
                            const Ordering& ordering,
                            const std::vector<double>& ts,
                            const std::vector<std::string>& methods,
                            const RoarOptions& opts) {
  const MlpModel full =
      train(init(config, opts.train.seed), sp.train, opts.train);
  return roar_curve(full, sp, ordering, ts, methods, opts);
}

/// Tidy plot data, one row per (t, method).
inline std::string roar_csv(const RoarCurve& curve) {
  std::string out = "t,method,mse,seconds\n";
  char buf[192];
  for (const auto& pt : curve.points) {
    std::snprintf(buf, sizeof buf, "%.6g,%s,%.17g,%.6f\n", pt.t,
                  pt.method.c_str(), pt.mse, pt.seconds);
    out += buf;
  }
  return out;
}

}  // namespace lazyvi
