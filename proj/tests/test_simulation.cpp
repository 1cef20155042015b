// Simulation-scale checks of the estimators on the correlated linear
// design at n = 1000: null and unit-importance variables for the retrain
// reference, the lazy estimate against the conditional-variance truth, the
// dropout-over-lazy ordering under correlation, and the early-stopped
// variant against full retraining.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lazyvi/analytic.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/estimators.hpp"
#include "lazyvi/network.hpp"

using namespace lazyvi;

namespace {

struct SeedRun {
  Split sp;
  MlpModel full;
};

SeedRun train_full(double rho, std::uint64_t seed, std::size_t n = 1000,
                   std::size_t width = 50, std::size_t epochs = 500) {
  const Dataset data = gen_linear_corr(n, rho, RngSeed{seed});
  SeedRun run;
  run.sp = split(data, 2 * n / 3, derive_seed(RngSeed{seed}, 1));
  TrainOptions opts;
  opts.epochs = epochs;
  opts.seed = derive_seed(RngSeed{seed}, 2);
  run.full = train(init(NetworkConfig{6, {width}}, opts.seed), run.sp.train,
                   opts);
  return run;
}

}  // namespace

TEST_CASE("correlated linear design at n = 1000, ten seeds") {
  const double rho = 0.5;
  LazyConfig lazy_cfg;
  lazy_cfg.cv_folds = 5;
  TrainOptions retrain_opts;
  retrain_opts.epochs = 500;

  int lazy_below_dropout = 0;
  int null_covered = 0;
  double lazy_j1_sum = 0.0;
  std::vector<double> retrain_j3;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SeedRun run = train_full(rho, seed);
    lazy_cfg.lambda_grid = default_lambda_grid(run.sp.train.n());
    retrain_opts.seed = derive_seed(RngSeed{seed}, 3);

    const ViEstimate drop1 = vi_dropout(run.full, run.sp, 0, SkillKind::neg_mse);
    const ViEstimate lazy1 = vi_lazy(run.full, run.sp, 0, SkillKind::neg_mse,
                                     lazy_cfg);
    lazy_j1_sum += lazy1.vi_hat;
    if (drop1.vi_hat > lazy1.vi_hat) ++lazy_below_dropout;

    const ViEstimate rt3 =
        vi_retrain(run.full, run.sp, 2, SkillKind::neg_mse, retrain_opts);
    retrain_j3.push_back(rt3.vi_hat);

    const ViEstimate rt4 =
        vi_retrain(run.full, run.sp, 3, SkillKind::neg_mse, retrain_opts);
    if (std::abs(rt4.vi_hat) <= 2.0 * rt4.tau_hat) ++null_covered;
  }

  SECTION("dropout overstates the correlated variable versus lazy") {
    CHECK(lazy_below_dropout >= 9);
  }
  SECTION("lazy mean for the correlated variable tracks the truth") {
    const double truth = example1_vi(1.5, 1.2, rho, 1.0);  // 1.6875
    CHECK(std::abs(lazy_j1_sum / 10.0 - truth) <= 0.25);
  }
  SECTION("retrain recovers the independent unit-importance variable") {
    for (double vi : retrain_j3) CHECK(std::abs(vi - 1.0) <= 0.2);
  }
  SECTION("retrain keeps the null variable within two standard errors") {
    CHECK(null_covered >= 8);
  }
}

TEST_CASE("early stopping with many steps approaches full retraining") {
  const SeedRun run = train_full(0.3, 77);
  TrainOptions retrain_opts;
  retrain_opts.epochs = 500;
  retrain_opts.seed = derive_seed(RngSeed{77}, 3);
  const ViEstimate rt =
      vi_retrain(run.full, run.sp, 0, SkillKind::neg_mse, retrain_opts);
  const ViEstimate es =
      vi_lazy_es(run.full, run.sp, 0, SkillKind::neg_mse, 500, 1e-2);
  const double slack = 2.0 * std::max(es.tau_hat, rt.tau_hat);
  CHECK(std::abs(es.vi_hat - rt.vi_hat) <= slack);
}

TEST_CASE("lazy per-sample terms reproduce the reported standard error") {
  const SeedRun run = train_full(0.4, 88, 600, 20, 200);
  LazyConfig cfg;
  cfg.lambda_grid = default_lambda_grid(run.sp.train.n());
  Vec t;
  const ViEstimate est =
      vi_lazy(run.full, run.sp, 1, SkillKind::neg_mse, cfg, &t);
  REQUIRE(t.size() == run.sp.test.n());
  const double recomputed =
      std::sqrt(population_variance(t) / static_cast<double>(t.size()));
  CHECK(est.tau_hat == recomputed);
  CHECK(mean(t) == Catch::Approx(est.vi_hat).margin(1e-12));
}
