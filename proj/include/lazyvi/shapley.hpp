#pragma once

// Shapley-value attribution where each coalition's reduced model comes from
// either the lazy parameter correction or a full retrain. Coalition skills
// are memoized by feature mask, so the sampled estimator pays for each
// distinct coalition once. Exact enumeration is available for small p and
// doubles as the oracle for the sampler.

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/estimators.hpp"
#include "lazyvi/network.hpp"
#include "lazyvi/stats.hpp"

namespace lazyvi {

enum class RefitMethod { lazy, retrain };

inline std::string to_string(RefitMethod m) {
  return m == RefitMethod::lazy ? "lazy" : "retrain";
}

struct ShapleyOptions {
  LazyConfig lazy{{50.0}, 5, 0.05};  // coalition fits use lambda_grid.front()
  TrainOptions train;                // for retrain fits
  SkillKind skill = SkillKind::neg_mse;
};

struct CoalitionFit {
  std::vector<std::size_t> subset;  // kept features
  double skill = 0.0;
  RefitMethod method = RefitMethod::lazy;
  std::optional<double> lambda;
};

struct ShapleyEstimate {
  Vec psi;                      // attribution per feature
  Vec se;                       // standard errors (zero for exact)
  std::size_t num_samples = 0;  // permutations drawn, or coalitions for exact
};

namespace detail {

// Memoized coalition skill. The mask marks features kept in the model; all
// others are imputed to their training means before the refit.
class CoalitionEvaluator {
 public:
  CoalitionEvaluator(const MlpModel& full, const Split& sp,
                     ShapleyOptions opts, RefitMethod method)
      : full_(full), split_(sp), opts_(std::move(opts)), method_(method) {
    if (opts_.lazy.lambda_grid.empty())
      throw BadSize("coalition fit: empty lambda grid");
    full_test_skill_ = eval_skill(full_, split_.test, opts_.skill);
  }

  double skill(const std::vector<bool>& keep_mask) {
    auto it = memo_.find(keep_mask);
    if (it != memo_.end()) return it->second;
    const double v = fit(keep_mask);
    memo_.emplace(keep_mask, v);
    return v;
  }

  std::size_t fits() const { return fits_; }
  SkillKind skill_kind() const { return opts_.skill; }
  const Split& split() const { return split_; }

 private:
  double fit(const std::vector<bool>& keep_mask) {
    ++fits_;
    std::vector<std::size_t> removed;
    for (std::size_t j = 0; j < keep_mask.size(); ++j)
      if (!keep_mask[j]) removed.push_back(j);
    if (removed.empty()) return full_test_skill_;

    const Dataset train_t = impute_features(split_.train, removed);
    const Dataset test_t = impute_features(split_.test, removed);
    if (method_ == RefitMethod::retrain) {
      const MlpModel reduced =
          train(init(full_.config, opts_.train.seed), train_t, opts_.train);
      return eval_skill(reduced, test_t, opts_.skill);
    }
    LazyConfig single = opts_.lazy;
    single.lambda_grid = {opts_.lazy.lambda_grid.front()};
    const LazyFit fit = lazy_fit(full_, train_t, single);
    MlpModel reduced = full_;
    for (std::size_t q = 0; q < reduced.theta.size(); ++q)
      reduced.theta[q] += fit.delta_theta[q];
    return eval_skill(reduced, test_t, opts_.skill);
  }

  const MlpModel& full_;
  const Split& split_;
  ShapleyOptions opts_;
  RefitMethod method_;
  double full_test_skill_ = 0.0;
  std::size_t fits_ = 0;
  std::map<std::vector<bool>, double> memo_;
};

}  // namespace detail

/// Test skill of the model refit to one coalition of kept features; every
/// feature outside the subset is imputed to its training mean. The full
/// coalition short-circuits to the full model's test skill.
inline CoalitionFit fit_coalition(const MlpModel& full, const Split& sp,
                                  const std::vector<std::size_t>& subset,
                                  const ShapleyOptions& opts,
                                  RefitMethod method) {
  const std::size_t p = sp.train.p();
  std::vector<bool> mask(p, false);
  for (std::size_t j : subset) {
    if (j >= p) throw IndexOutOfRange("fit_coalition: feature out of range");
    mask[j] = true;
  }
  detail::CoalitionEvaluator ev(full, sp, opts, method);
  CoalitionFit fit;
  fit.subset = subset;
  fit.method = method;
  fit.skill = ev.skill(mask);
  if (method == RefitMethod::lazy) fit.lambda = opts.lazy.lambda_grid.front();
  return fit;
}

/// Exact Shapley values by enumerating all 2^p coalitions:
/// psi_j = sum over subsets s excluding j of
///         [(1/p) * C(p-1, |s|)^{-1}] * [V(s + j) - V(s)].
inline ShapleyEstimate shapley_exact(const MlpModel& full, const Split& sp,
                                     const ShapleyOptions& opts,
                                     RefitMethod method) {
  const std::size_t p = sp.train.p();
  if (p > 12)
    throw TooManyFeatures("shapley_exact: 2^p coalitions infeasible for p = " +
                          std::to_string(p));
  detail::CoalitionEvaluator ev(full, sp, opts, method);

  // Weights 1 / (p * C(p-1, k)) for subset size k.
  Vec weight(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    double binom = 1.0;
    for (std::size_t i = 0; i < k; ++i)
      binom = binom * static_cast<double>(p - 1 - i) /
              static_cast<double>(i + 1);
    weight[k] = 1.0 / (static_cast<double>(p) * binom);
  }

  Vec skills(std::size_t{1} << p, 0.0);
  std::vector<bool> mask(p);
  for (std::size_t s = 0; s < skills.size(); ++s) {
    for (std::size_t j = 0; j < p; ++j) mask[j] = (s >> j) & 1U;
    skills[s] = ev.skill(mask);
  }

  ShapleyEstimate est;
  est.psi.assign(p, 0.0);
  est.se.assign(p, 0.0);
  est.num_samples = skills.size();
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t s = 0; s < skills.size(); ++s) {
      if (s & bit) continue;
      std::size_t size = 0;
      for (std::size_t q = 0; q < p; ++q) size += (s >> q) & 1U;
      est.psi[j] += weight[size] * (skills[s | bit] - skills[s]);
    }
  }
  return est;
}

/// Monte Carlo Shapley values: walk uniformly random feature permutations
/// and accumulate the marginal skill gain of each feature along the prefix
/// chain. Unbiased for the combinatorially weighted definition; standard
/// errors come from the spread across permutation draws.
inline ShapleyEstimate shapley_sampled(const MlpModel& full, const Split& sp,
                                       const ShapleyOptions& opts,
                                       std::size_t num_permutations,
                                       RngSeed seed,
                                       RefitMethod method = RefitMethod::lazy) {
  if (num_permutations == 0)
    throw BadSize("shapley_sampled: need at least one permutation");
  const std::size_t p = sp.train.p();
  detail::CoalitionEvaluator ev(full, sp, opts, method);
  Rng rng(seed);

  // One marginal draw per feature per permutation; kept so standard errors
  // can use a cancellation-free two-pass variance.
  std::vector<Vec> marginals(p, Vec(num_permutations, 0.0));
  std::vector<std::size_t> order(p);
  std::vector<bool> mask(p);
  for (std::size_t r = 0; r < num_permutations; ++r) {
    for (std::size_t j = 0; j < p; ++j) order[j] = j;
    for (std::size_t j = p; j-- > 1;)
      std::swap(order[j], order[rng.uniform_below(j + 1)]);
    std::fill(mask.begin(), mask.end(), false);
    double prev = ev.skill(mask);
    for (std::size_t j : order) {
      mask[j] = true;
      const double cur = ev.skill(mask);
      marginals[j][r] = cur - prev;
      prev = cur;
    }
  }

  ShapleyEstimate est;
  est.psi.assign(p, 0.0);
  est.se.assign(p, 0.0);
  est.num_samples = num_permutations;
  const double r = static_cast<double>(num_permutations);
  for (std::size_t j = 0; j < p; ++j) {
    est.psi[j] = mean(marginals[j]);
    if (num_permutations > 1)
      est.se[j] = std::sqrt(sample_variance(marginals[j]) / r);
  }
  return est;
}

inline nlohmann::json to_json(const ShapleyEstimate& e) {
  return nlohmann::json{
      {"psi", e.psi}, {"se", e.se}, {"num_samples", e.num_samples}};
}

/// CSV with one row per feature (1-based).
inline std::string shapley_csv(const ShapleyEstimate& e,
                               const std::vector<std::string>& names = {}) {
  std::string out = "feature,psi,se\n";
  char buf[192];
  for (std::size_t j = 0; j < e.psi.size(); ++j) {
    const std::string name =
        names.empty() ? "x" + std::to_string(j + 1) : names[j];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", name.c_str(), e.psi[j],
                  e.se[j]);
    out += buf;
  }
  return out;
}

}  // namespace lazyvi
