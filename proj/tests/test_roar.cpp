#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lazyvi/data.hpp"
#include "lazyvi/network.hpp"
#include "lazyvi/roar.hpp"
#include "lazyvi/stats.hpp"

using namespace lazyvi;

namespace {

MlpModel linear_model(const Vec& coeffs_then_intercept) {
  NetworkConfig cfg{coeffs_then_intercept.size() - 1, {}};
  return MlpModel{cfg, coeffs_then_intercept};
}

}  // namespace

TEST_CASE("grad_saliency") {
  SECTION("affine head ranks by |w|") {
    const MlpModel m = linear_model({0.5, -3.0, 1.5, 0.0});
    Matrix x(4, 3);
    Rng rng(RngSeed{3});
    for (double& v : x.data()) v = rng.normal();
    const Dataset d = make_dataset(x, Vec(4, 0.0));
    const Ordering ord = grad_saliency(m, d);
    CHECK(ord.ranked == std::vector<std::size_t>{1, 2, 0});
    CHECK(ord.source == "grad");
  }

  SECTION("a disconnected feature lands last, among zeros by index") {
    NetworkConfig cfg{3, {4}};
    MlpModel m = init(cfg, RngSeed{5});
    const auto layers = detail::layer_views(cfg);
    // Zero out every first-layer weight feeding feature 1.
    for (std::size_t o = 0; o < 4; ++o)
      m.theta[layers[0].w_off + o * 3 + 1] = 0.0;
    Matrix x(16, 3);
    Rng rng(RngSeed{6});
    for (double& v : x.data()) v = rng.normal();
    const Dataset d = make_dataset(x, Vec(16, 0.0));
    const Ordering ord = grad_saliency(m, d);
    CHECK(ord.ranked.back() == 1);
  }

  SECTION("duplicate features with tied weights sit on adjacent ranks") {
    NetworkConfig cfg{4, {3}};
    MlpModel m = init(cfg, RngSeed{7});
    const auto layers = detail::layer_views(cfg);
    for (std::size_t o = 0; o < 3; ++o) {
      const double w = m.theta[layers[0].w_off + o * 4 + 1];
      m.theta[layers[0].w_off + o * 4 + 2] = w;  // tie features 1 and 2
    }
    Matrix x(32, 4);
    Rng rng(RngSeed{8});
    for (std::size_t i = 0; i < 32; ++i) {
      x(i, 0) = rng.normal();
      x(i, 1) = rng.normal();
      x(i, 2) = x(i, 1);  // identical column
      x(i, 3) = rng.normal();
    }
    const Dataset d = make_dataset(x, Vec(32, 0.0));
    const Ordering ord = grad_saliency(m, d);
    std::size_t pos1 = 0, pos2 = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      if (ord.ranked[k] == 1) pos1 = k;
      if (ord.ranked[k] == 2) pos2 = k;
    }
    CHECK(pos2 == pos1 + 1);  // equal importance, index tie-break
  }

  SECTION("invariant to permuting sample order") {
    const MlpModel m = init(NetworkConfig{5, {6}}, RngSeed{9});
    Matrix x(40, 5);
    Rng rng(RngSeed{10});
    for (double& v : x.data()) v = rng.normal();
    const Dataset d = make_dataset(x, Vec(40, 0.0));
    Matrix xr(40, 5);
    for (std::size_t i = 0; i < 40; ++i)  // reversed row order
      for (std::size_t j = 0; j < 5; ++j) xr(i, j) = x(39 - i, j);
    const Dataset dr = make_dataset(xr, Vec(40, 0.0));
    CHECK(grad_saliency(m, d).ranked == grad_saliency(m, dr).ranked);
  }

  SECTION("dimension check") {
    const MlpModel m = init(NetworkConfig{3, {2}}, RngSeed{11});
    Matrix x(4, 2);
    const Dataset d = make_dataset(x, Vec(4, 0.0));
    REQUIRE_THROWS_AS(grad_saliency(m, d), DimensionMismatch);
  }
}

TEST_CASE("random_ordering is a seeded permutation") {
  const Ordering a = random_ordering(10, RngSeed{12});
  const Ordering b = random_ordering(10, RngSeed{12});
  CHECK(a.ranked == b.ranked);
  CHECK(a.source == "random");
  std::vector<bool> seen(10, false);
  for (std::size_t j : a.ranked) {
    REQUIRE(j < 10);
    REQUIRE_FALSE(seen[j]);
    seen[j] = true;
  }
}

TEST_CASE("roar_curve") {
  const Dataset data = gen_linear_corr(500, 0.3, RngSeed{21});
  const Split sp = split(data, 333, RngSeed{22});

  RoarOptions opts;
  opts.train.epochs = 200;
  opts.train.seed = RngSeed{23};
  NetworkConfig cfg{6, {16}};
  const MlpModel full =
      train(init(cfg, opts.train.seed), sp.train, opts.train);
  Ordering given;
  given.ranked = {2, 0, 1, 3, 4, 5};
  given.source = "given";

  SECTION("t = 0 returns the full-model MSE for every method") {
    const RoarCurve curve =
        roar_curve(full, sp, given, {0.0}, {"dropout", "retrain", "lazy"}, opts);
    REQUIRE(curve.points.size() == 3);
    for (const auto& pt : curve.points) CHECK(pt.mse == curve.full_mse);
  }

  SECTION("t = 1 retrain collapses to the best constant predictor") {
    const RoarCurve curve = roar_curve(full, sp, given, {1.0}, {"retrain"}, opts);
    const double var_y = population_variance(sp.test.Y);
    REQUIRE(curve.points.size() == 1);
    CHECK(std::abs(curve.points[0].mse - var_y) <= 0.10 * var_y);
  }

  SECTION("architecture overload trains the same shared model") {
    const RoarCurve a =
        roar_curve(full, sp, given, {0.25, 0.5}, {"dropout"}, opts);
    const RoarCurve b =
        roar_curve(cfg, sp, given, {0.25, 0.5}, {"dropout"}, opts);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t k = 0; k < a.points.size(); ++k)
      CHECK(a.points[k].mse == b.points[k].mse);
  }

  SECTION("proportions are sorted ascending in the output") {
    const RoarCurve curve =
        roar_curve(full, sp, given, {0.9, 0.1}, {"dropout"}, opts);
    REQUIRE(curve.ts == std::vector<double>{0.1, 0.9});
    CHECK(curve.points[0].t == 0.1);
  }

  SECTION("validation") {
    REQUIRE_THROWS_AS(
        roar_curve(full, sp, given, {1.5}, {"dropout"}, opts), OutOfRange);
    REQUIRE_THROWS_AS(
        roar_curve(full, sp, given, {0.5}, {"sliced"}, opts), ConfigError);
    Ordering bad;
    bad.ranked = {0, 1};
    REQUIRE_THROWS_AS(
        roar_curve(full, sp, bad, {0.5}, {"dropout"}, opts), DimensionMismatch);
  }
}

TEST_CASE("roar csv") {
  RoarCurve curve;
  curve.ts = {0.1};
  curve.points.push_back({0.1, "lazy", 2.5, 0.125});
  curve.points.push_back({0.1, "retrain", 2.25, 1.5});
  const std::string csv = roar_csv(curve);
  CHECK(csv.find("t,method,mse,seconds") == 0);
  CHECK(csv.find("0.1,lazy,2.5,0.125") != std::string::npos);
  CHECK(csv.find("0.1,retrain,2.25,1.5") != std::string::npos);
  CHECK(curve.total_seconds("lazy") == 0.125);
}
