#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lazyvi/data.hpp"
#include "lazyvi/linalg.hpp"
#include "lazyvi/network.hpp"

using namespace lazyvi;

namespace {

// Straight-line re-implementation of the forward pass, reading the frozen
// parameter layout directly: per layer, weights (row-major by output unit)
// then biases; ReLU on every layer but the last.
double naive_forward(const MlpModel& m, const Vec& x) {
  auto sizes = m.config.layer_sizes();
  Vec cur = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    Vec next(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = m.theta[off + in * out + o];  // bias
      for (std::size_t i = 0; i < in; ++i) s += m.theta[off + o * in + i] * cur[i];
      next[o] = s;
    }
    off += (in + 1) * out;
    if (l + 2 < sizes.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur = next;
  }
  return cur[0];
}

Vec fd_param_gradient(const MlpModel& m, const Vec& x, double h = 1e-5) {
  Vec g(m.theta.size());
  MlpModel plus = m, minus = m;
  for (std::size_t k = 0; k < m.theta.size(); ++k) {
    plus.theta[k] = m.theta[k] + h;
    minus.theta[k] = m.theta[k] - h;
    g[k] = (forward(plus, x) - forward(minus, x)) / (2.0 * h);
    plus.theta[k] = m.theta[k];
    minus.theta[k] = m.theta[k];
  }
  return g;
}

Vec fd_input_gradient(const MlpModel& m, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    g[k] = (forward(m, xp) - forward(m, xm)) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return g;
}

void check_close(const Vec& a, const Vec& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    REQUIRE(std::abs(a[k] - b[k]) <= tol * std::max(1.0, std::abs(b[k])));
}

Vec random_input(std::size_t p, Rng& rng) {
  Vec x(p);
  for (double& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("init is deterministic with zero biases and the documented size") {
  NetworkConfig cfg{6, {50}};
  REQUIRE(cfg.param_count() == 6 * 50 + 50 + 50 * 1 + 1);  // 401
  const MlpModel a = init(cfg, RngSeed{42});
  const MlpModel b = init(cfg, RngSeed{42});
  REQUIRE(a.theta == b.theta);
  const auto layers = detail::layer_views(cfg);
  for (const auto& lv : layers)
    for (std::size_t o = 0; o < lv.out; ++o) CHECK(a.theta[lv.b_off + o] == 0.0);
  const MlpModel c = init(cfg, RngSeed{43});
  REQUIRE(a.theta != c.theta);
}

TEST_CASE("forward edge cases") {
  SECTION("zero weights give zero output") {
    NetworkConfig cfg{3, {4}};
    MlpModel m{cfg, Vec(cfg.param_count(), 0.0)};
    CHECK(forward(m, Vec{1.0, -2.0, 0.5}) == 0.0);
  }
  SECTION("dead hidden unit leaves only the output bias") {
    NetworkConfig cfg{2, {1}};
    MlpModel m{cfg, Vec(cfg.param_count(), 0.0)};
    // Hidden pre-activation forced negative; output bias = 0.75.
    m.theta[0] = -1.0;   // w11
    m.theta[1] = -1.0;   // w12
    m.theta[2] = -0.5;   // hidden bias
    m.theta[3] = 3.0;    // output weight
    m.theta[4] = 0.75;   // output bias
    CHECK(forward(m, Vec{1.0, 1.0}) == 0.75);
  }
  SECTION("matches a straight-line re-implementation") {
    Rng rng(RngSeed{5});
    for (int rep = 0; rep < 10; ++rep) {
      NetworkConfig cfg{4, {7, 3}};
      MlpModel m = init(cfg, RngSeed{100 + static_cast<std::uint64_t>(rep)});
      for (double& v : m.theta) v += 0.1 * rng.normal();  // random biases too
      const Vec x = random_input(4, rng);
      CHECK(forward(m, x) == Catch::Approx(naive_forward(m, x)).margin(1e-12));
    }
  }
  SECTION("dimension mismatch") {
    NetworkConfig cfg{3, {2}};
    const MlpModel m = init(cfg, RngSeed{1});
    REQUIRE_THROWS_AS(forward(m, Vec{1.0, 2.0}), DimensionMismatch);
  }
}

TEST_CASE("param_gradient") {
  SECTION("affine head has gradient (x, 1)") {
    NetworkConfig cfg{3, {}};
    MlpModel m{cfg, Vec{0.5, -1.0, 2.0, 0.3}};  // w1..w3, b
    const Vec x = {1.5, -0.5, 2.5};
    const Vec g = param_gradient(m, x);
    CHECK(g[0] == x[0]);
    CHECK(g[1] == x[1]);
    CHECK(g[2] == x[2]);
    CHECK(g[3] == 1.0);
  }
  SECTION("dead hidden layer zeroes the first weight block") {
    NetworkConfig cfg{2, {3}};
    MlpModel m{cfg, Vec(cfg.param_count(), 0.0)};
    const auto layers = detail::layer_views(cfg);
    for (std::size_t k = 0; k < 6; ++k) m.theta[layers[0].w_off + k] = -1.0;
    for (std::size_t o = 0; o < 3; ++o) m.theta[layers[0].b_off + o] = -0.1;
    for (std::size_t k = 0; k < 3; ++k) m.theta[layers[1].w_off + k] = 1.0;
    const Vec g = param_gradient(m, Vec{1.0, 1.0});
    for (std::size_t k = 0; k < 6; ++k) CHECK(g[layers[0].w_off + k] == 0.0);
    for (std::size_t o = 0; o < 3; ++o) CHECK(g[layers[0].b_off + o] == 0.0);
    CHECK(g[layers[1].b_off] == 1.0);  // output bias always contributes
  }
  SECTION("matches central finite differences") {
    Rng rng(RngSeed{6});
    const MlpModel m = init(NetworkConfig{4, {6, 3}}, RngSeed{7});
    const Vec x = random_input(4, rng);
    check_close(param_gradient(m, x), fd_param_gradient(m, x), 1e-5);
  }
}

TEST_CASE("input_gradient") {
  SECTION("affine head has gradient w") {
    NetworkConfig cfg{3, {}};
    MlpModel m{cfg, Vec{0.5, -1.0, 2.0, 0.3}};
    const Vec g = input_gradient(m, Vec{1.0, 2.0, 3.0});
    CHECK(g == Vec{0.5, -1.0, 2.0});
  }
  SECTION("matches central finite differences") {
    Rng rng(RngSeed{8});
    const MlpModel m = init(NetworkConfig{5, {8}}, RngSeed{9});
    const Vec x = random_input(5, rng);
    check_close(input_gradient(m, x), fd_input_gradient(m, x), 1e-5);
  }
  SECTION("duplicated feature with tied weights gets equal entries") {
    NetworkConfig cfg{2, {2}};
    MlpModel m{cfg, Vec(cfg.param_count(), 0.0)};
    const auto layers = detail::layer_views(cfg);
    // Both hidden units weight the two inputs identically.
    m.theta[layers[0].w_off + 0] = 0.7;
    m.theta[layers[0].w_off + 1] = 0.7;
    m.theta[layers[0].w_off + 2] = -0.2;
    m.theta[layers[0].w_off + 3] = -0.2;
    m.theta[layers[0].b_off + 0] = 0.1;
    m.theta[layers[0].b_off + 1] = 0.4;
    m.theta[layers[1].w_off + 0] = 1.3;
    m.theta[layers[1].w_off + 1] = -0.8;
    const Vec g = input_gradient(m, Vec{0.6, 0.6});
    CHECK(g[0] == Catch::Approx(g[1]));
  }
}

TEST_CASE("gradients match finite differences on many random pairs") {
  Rng rng(RngSeed{10});
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    NetworkConfig cfg{3, {1 + rng.uniform_below(6)}};
    const MlpModel m =
        init(cfg, RngSeed{200 + static_cast<std::uint64_t>(rep)});
    const Vec x = random_input(3, rng);
    // Stay away from ReLU kinks: skip draws with a tiny pre-activation.
    bool near_kink = false;
    const auto layers = detail::layer_views(cfg);
    for (std::size_t o = 0; o < layers[0].out; ++o) {
      double s = m.theta[layers[0].b_off + o];
      for (std::size_t i = 0; i < 3; ++i)
        s += m.theta[layers[0].w_off + o * 3 + i] * x[i];
      if (std::abs(s) < 1e-3) near_kink = true;
    }
    if (near_kink) continue;
    ++checked;
    check_close(param_gradient(m, x), fd_param_gradient(m, x), 1e-5);
    check_close(input_gradient(m, x), fd_input_gradient(m, x), 1e-5);
  }
  REQUIRE(checked > 80);
}

TEST_CASE("training") {
  // Y = 2 X1 with a little noise; a width-50 net should reach the linear
  // oracle's training error.
  Rng rng(RngSeed{11});
  const std::size_t n = 200;
  Matrix x(n, 2);
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 2.0 * x(i, 0) + 0.05 * rng.normal();
  }
  const Dataset data = make_dataset(x, y);

  SECTION("reaches the least-squares oracle") {
    // OLS training MSE on (X, 1) via the normal equations.
    Matrix design(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      design(i, 0) = data.X(i, 0);
      design(i, 1) = data.X(i, 1);
      design(i, 2) = 1.0;
    }
    const Vec beta = spd_solve(gram_tt(design), matvec_t(design, data.Y));
    double ols_mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = data.Y[i] - dot(design.row(i), beta);
      ols_mse += r * r;
    }
    ols_mse /= static_cast<double>(n);

    TrainOptions opts;
    opts.epochs = 500;
    const MlpModel fitted =
        train(init(NetworkConfig{2, {50}}, RngSeed{12}), data, opts);
    REQUIRE(training_mse(fitted, data) <= 1.05 * ols_mse);
  }

  SECTION("never ends worse than it started") {
    TrainOptions opts;
    opts.epochs = 40;
    const MlpModel start = init(NetworkConfig{2, {8}}, RngSeed{13});
    const double before = training_mse(start, data);
    const MlpModel fitted = train(start, data, opts);
    REQUIRE(training_mse(fitted, data) <= before);
  }

  SECTION("zero early-stop steps return the input parameters") {
    TrainOptions opts;
    opts.early_stop_steps = 0;
    const MlpModel start = init(NetworkConfig{2, {8}}, RngSeed{14});
    const MlpModel out = train(start, data, opts);
    REQUIRE(out.theta == start.theta);
  }

  SECTION("early stopping applies exactly the requested updates") {
    TrainOptions one;
    one.early_stop_steps = 1;
    TrainOptions two;
    two.early_stop_steps = 2;
    const MlpModel start = init(NetworkConfig{2, {8}}, RngSeed{15});
    const MlpModel after_one = train(start, data, one);
    const MlpModel after_two = train(start, data, two);
    REQUIRE(after_one.theta != start.theta);
    // Re-running the same schedule reproduces it exactly.
    REQUIRE(train(start, data, two).theta == after_two.theta);
  }

  SECTION("bit-reproducible under fixed options") {
    TrainOptions opts;
    opts.epochs = 30;
    const MlpModel a = train(init(NetworkConfig{2, {8}}, RngSeed{16}), data, opts);
    const MlpModel b = train(init(NetworkConfig{2, {8}}, RngSeed{16}), data, opts);
    REQUIRE(a.theta == b.theta);
  }

  SECTION("diverging loss reports NonFiniteLoss") {
    TrainOptions opts;
    opts.optimizer = Optimizer::momentum;
    opts.learning_rate = 1e12;
    opts.epochs = 50;
    REQUIRE_THROWS_AS(train(init(NetworkConfig{2, {8}}, RngSeed{17}), data, opts),
                      NonFiniteLoss);
  }
}

TEST_CASE("ntk matrix") {
  Rng rng(RngSeed{18});
  const MlpModel m = init(NetworkConfig{3, {5}}, RngSeed{19});

  SECTION("single sample gives a nonnegative 1x1 kernel") {
    Matrix x(1, 3);
    for (std::size_t j = 0; j < 3; ++j) x(0, j) = rng.normal();
    const Matrix k = ntk_matrix(m, x);
    REQUIRE(k.rows() == 1);
    REQUIRE(k(0, 0) >= 0.0);
  }

  Matrix x(6, 3);
  for (double& v : x.data()) v = rng.normal();
  const Matrix k = ntk_matrix(m, x);

  SECTION("trace equals the sum of squared gradient norms") {
    double tr = 0.0;
    for (std::size_t i = 0; i < 6; ++i) tr += k(i, i);
    CHECK(tr == Catch::Approx(ntk_trace(m, x)).epsilon(1e-12));
    double direct = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      const Vec g = param_gradient(m, x.row(i));
      direct += dot(g, g);
    }
    CHECK(tr == Catch::Approx(direct).epsilon(1e-12));
  }

  SECTION("equals the explicit feature product") {
    const Matrix phi = gradient_features(m, x);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        REQUIRE(std::abs(k(i, j) - dot(phi.row(i), phi.row(j))) <= 1e-10);
  }

  SECTION("symmetric and positive semidefinite within tolerance") {
    double tr = 0.0;
    for (std::size_t i = 0; i < 6; ++i) tr += k(i, i);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        REQUIRE(std::abs(k(i, j) - k(j, i)) <= 1e-12);
    // Smallest eigenvalue >= -1e-8 * trace: the shifted kernel must factor.
    Matrix shifted = k;
    for (std::size_t i = 0; i < 6; ++i) shifted(i, i) += 1e-8 * tr + 1e-9;
    REQUIRE_NOTHROW(cholesky(shifted));
  }
}

TEST_CASE("model serialization round-trips losslessly") {
  const MlpModel m = init(NetworkConfig{4, {6, 3}}, RngSeed{20});
  const std::string text = model_to_json(m).dump();
  const MlpModel back = model_from_json(nlohmann::json::parse(text));
  REQUIRE(back.config == m.config);
  REQUIRE(back.theta == m.theta);  // exact: shortest-round-trip doubles
}
