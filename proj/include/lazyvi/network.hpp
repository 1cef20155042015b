#pragma once

// Fully connected ReLU network with a scalar output, exact backpropagated
// gradients with respect to both parameters and inputs, and a full-batch
// trainer. The parameter vector layout is frozen: layers in input-to-output
// order; within a layer, the weight matrix first (row-major by output unit,
// entry [o * fan_in + i] connecting input i to unit o), then the biases.
// Gradient feature rows and parameter corrections share this layout, so a
// correction can be added to a trained parameter vector elementwise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"

namespace lazyvi {

struct NetworkConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;  // empty = plain affine head

  // Layer sizes from input to the scalar output.
  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s;
    s.push_back(input_dim);
    s.insert(s.end(), hidden_widths.begin(), hidden_widths.end());
    s.push_back(1);
    return s;
  }

  std::size_t param_count() const {
    const auto s = layer_sizes();
    std::size_t m = 0;
    for (std::size_t l = 0; l + 1 < s.size(); ++l) m += (s[l] + 1) * s[l + 1];
    return m;
  }

  void validate() const {
    if (input_dim == 0) throw BadSize("NetworkConfig: input_dim must be >= 1");
    for (std::size_t w : hidden_widths)
      if (w == 0) throw BadSize("NetworkConfig: hidden widths must be >= 1");
  }

  bool operator==(const NetworkConfig&) const = default;
};

struct MlpModel {
  NetworkConfig config;
  Vec theta;  // flattened parameters, length config.param_count()
};

enum class Optimizer { momentum, adaptive };

struct TrainOptions {
  Optimizer optimizer = Optimizer::adaptive;
  double learning_rate = 1e-2;
  std::size_t epochs = 500;
  RngSeed seed{0};
  std::optional<std::size_t> early_stop_steps;  // exact update count if set
};

namespace detail {

struct LayerView {
  std::size_t w_off, b_off, in, out;
};

inline std::vector<LayerView> layer_views(const NetworkConfig& cfg) {
  const auto s = cfg.layer_sizes();
  std::vector<LayerView> v;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < s.size(); ++l) {
    LayerView lv{off, off + s[l] * s[l + 1], s[l], s[l + 1]};
    off = lv.b_off + lv.out;
    v.push_back(lv);
  }
  return v;
}

// Reusable activation buffers so hot loops avoid per-sample allocation.
struct MlpScratch {
  std::vector<Vec> act;   // act[0] = input, act[L] = output (post-activation)
  std::vector<Vec> pre;   // pre-activation per non-input layer
  std::vector<Vec> grad;  // gradient wrt pre-activation, backward pass

  void resize(const NetworkConfig& cfg) {
    const auto s = cfg.layer_sizes();
    act.assign(s.size(), {});
    pre.assign(s.size(), {});
    grad.assign(s.size(), {});
    for (std::size_t l = 0; l < s.size(); ++l) {
      act[l].assign(s[l], 0.0);
      pre[l].assign(s[l], 0.0);
      grad[l].assign(s[l], 0.0);
    }
  }
};

// Forward pass; hidden layers apply ReLU, the final layer is affine.
inline double forward_into(const MlpModel& m,
                           const std::vector<LayerView>& layers,
                           std::span<const double> x, MlpScratch& ws) {
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  const double* th = m.theta.data();
  const std::size_t depth = layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const LayerView& lv = layers[l];
    const Vec& prev = ws.act[l];
    Vec& pre = ws.pre[l + 1];
    Vec& act = ws.act[l + 1];
    const bool last = (l + 1 == depth);
    for (std::size_t o = 0; o < lv.out; ++o) {
      const double* w = th + lv.w_off + o * lv.in;
      double s = th[lv.b_off + o];
      for (std::size_t i = 0; i < lv.in; ++i) s += w[i] * prev[i];
      pre[o] = s;
      act[o] = last ? s : (s > 0.0 ? s : 0.0);
    }
  }
  return ws.act[depth][0];
}

// Backward pass after forward_into. Accumulates d(output)/d(theta) scaled by
// out_grad into grad_theta when non-null; leaves d(output)/d(input) in
// ws.grad[0]. The ReLU subgradient at exactly zero is taken as zero.
inline void backward_into(const MlpModel& m,
                          const std::vector<LayerView>& layers,
                          MlpScratch& ws, double out_grad, double* grad_theta) {
  const double* th = m.theta.data();
  const std::size_t depth = layers.size();
  ws.grad[depth][0] = out_grad;
  for (std::size_t l = depth; l-- > 0;) {
    const LayerView& lv = layers[l];
    const Vec& prev = ws.act[l];
    const Vec& g_out = ws.grad[l + 1];
    Vec& g_in = ws.grad[l];
    std::fill(g_in.begin(), g_in.end(), 0.0);
    for (std::size_t o = 0; o < lv.out; ++o) {
      const double g = g_out[o];
      if (g == 0.0) continue;
      const double* w = th + lv.w_off + o * lv.in;
      if (grad_theta) {
        double* gw = grad_theta + lv.w_off + o * lv.in;
        for (std::size_t i = 0; i < lv.in; ++i) {
          gw[i] += g * prev[i];
          g_in[i] += g * w[i];
        }
        grad_theta[lv.b_off + o] += g;
      } else {
        for (std::size_t i = 0; i < lv.in; ++i) g_in[i] += g * w[i];
      }
    }
    if (l > 0) {
      const Vec& pre = ws.pre[l];
      for (std::size_t i = 0; i < lv.in; ++i)
        if (!(pre[i] > 0.0)) g_in[i] = 0.0;
    }
  }
}

}  // namespace detail

/// Fresh model with fan-in-scaled Gaussian weights (variance 2/fan_in on
/// ReLU layers, 1/fan_in on the linear output layer) and zero biases.
inline MlpModel init(const NetworkConfig& cfg, RngSeed seed) {
  cfg.validate();
  MlpModel m{cfg, Vec(cfg.param_count(), 0.0)};
  Rng rng(seed);
  const auto layers = detail::layer_views(cfg);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lv = layers[l];
    const bool last = (l + 1 == layers.size());
    const double sd =
        std::sqrt((last ? 1.0 : 2.0) / static_cast<double>(lv.in));
    for (std::size_t k = 0; k < lv.in * lv.out; ++k)
      m.theta[lv.w_off + k] = sd * rng.normal();
  }
  return m;
}

inline double forward(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.config.input_dim)
    throw DimensionMismatch("forward: input length != input_dim");
  detail::MlpScratch ws;
  ws.resize(m.config);
  return detail::forward_into(m, detail::layer_views(m.config), x, ws);
}

/// Exact gradient of the scalar output with respect to the flattened
/// parameter vector, in the frozen layout above.
inline Vec param_gradient(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.config.input_dim)
    throw DimensionMismatch("param_gradient: input length != input_dim");
  detail::MlpScratch ws;
  ws.resize(m.config);
  const auto layers = detail::layer_views(m.config);
  detail::forward_into(m, layers, x, ws);
  Vec g(m.theta.size(), 0.0);
  detail::backward_into(m, layers, ws, 1.0, g.data());
  return g;
}

/// Exact gradient of the scalar output with respect to the input vector.
inline Vec input_gradient(const MlpModel& m, std::span<const double> x) {
  if (x.size() != m.config.input_dim)
    throw DimensionMismatch("input_gradient: input length != input_dim");
  detail::MlpScratch ws;
  ws.resize(m.config);
  const auto layers = detail::layer_views(m.config);
  detail::forward_into(m, layers, x, ws);
  detail::backward_into(m, layers, ws, 1.0, nullptr);
  return ws.grad[0];
}

/// Rows are param_gradient at each row of X: the n x M gradient feature
/// matrix.
inline Matrix gradient_features(const MlpModel& m, const Matrix& x) {
  if (x.cols() != m.config.input_dim)
    throw DimensionMismatch("gradient_features: X cols != input_dim");
  detail::MlpScratch ws;
  ws.resize(m.config);
  const auto layers = detail::layer_views(m.config);
  Matrix phi(x.rows(), m.theta.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    detail::forward_into(m, layers, x.row(i), ws);
    detail::backward_into(m, layers, ws, 1.0, phi.row(i).data());
  }
  return phi;
}

/// Kernel matrix of pairwise gradient inner products, K = Phi Phi^T.
inline Matrix ntk_matrix(const MlpModel& m, const Matrix& x) {
  return gram_nn(gradient_features(m, x));
}

/// trace(K) = sum of squared gradient-feature row norms; avoids forming K.
inline double ntk_trace(const MlpModel& m, const Matrix& x) {
  if (x.cols() != m.config.input_dim)
    throw DimensionMismatch("ntk_trace: X cols != input_dim");
  detail::MlpScratch ws;
  ws.resize(m.config);
  const auto layers = detail::layer_views(m.config);
  Vec g(m.theta.size());
  double tr = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    detail::forward_into(m, layers, x.row(i), ws);
    detail::backward_into(m, layers, ws, 1.0, g.data());
    tr += dot(g, g);
  }
  return tr;
}

/// Mean squared error of the model over a dataset.
inline double training_mse(const MlpModel& m, const Dataset& d) {
  if (d.n() == 0) throw EmptyDataset("training_mse: empty dataset");
  detail::MlpScratch ws;
  ws.resize(m.config);
  const auto layers = detail::layer_views(m.config);
  double s = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double r = detail::forward_into(m, layers, d.X.row(i), ws) - d.Y[i];
    s += r * r;
  }
  return s / static_cast<double>(d.n());
}

/// Full-batch training on the squared-error loss, starting from the given
/// parameters. Without early_stop_steps the best parameters seen across the
/// run are returned (never worse than the starting point on training MSE);
/// with early_stop_steps set, exactly that many updates are applied and the
/// resulting parameters are returned as-is.
inline MlpModel train(MlpModel model, const Dataset& data,
                      const TrainOptions& opts) {
  if (data.n() == 0) throw EmptyDataset("train: empty dataset");
  if (data.p() != model.config.input_dim)
    throw DimensionMismatch("train: data width != input_dim");
  if (!(opts.learning_rate >= 0.0))
    throw OutOfRange("train: learning rate must be >= 0");

  const bool exact_steps = opts.early_stop_steps.has_value();
  const std::size_t steps =
      exact_steps ? *opts.early_stop_steps : std::max<std::size_t>(1, opts.epochs);
  if (steps == 0) return model;

  const auto layers = detail::layer_views(model.config);
  detail::MlpScratch ws;
  ws.resize(model.config);
  const std::size_t mdim = model.theta.size();
  const double inv_n = 1.0 / static_cast<double>(data.n());

  Vec grad(mdim), m1(mdim, 0.0), m2(mdim, 0.0);
  Vec best_theta = model.theta;
  double best_loss = std::numeric_limits<double>::infinity();

  constexpr double kMomentum = 0.9;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  auto loss_and_grad = [&](Vec* g) {
    if (g) std::fill(g->begin(), g->end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double r =
          detail::forward_into(model, layers, data.X.row(i), ws) - data.Y[i];
      loss += r * r;
      if (g) detail::backward_into(model, layers, ws, 2.0 * r * inv_n, g->data());
    }
    return loss * inv_n;
  };

  for (std::size_t step = 1; step <= steps; ++step) {
    const double loss = loss_and_grad(&grad);
    if (!std::isfinite(loss))
      throw NonFiniteLoss("train: loss diverged at step " +
                          std::to_string(step) +
                          " (learning rate too large?)");
    if (!exact_steps && loss < best_loss) {
      best_loss = loss;
      best_theta = model.theta;
    }
    if (opts.optimizer == Optimizer::momentum) {
      for (std::size_t k = 0; k < mdim; ++k) {
        m1[k] = kMomentum * m1[k] - opts.learning_rate * grad[k];
        model.theta[k] += m1[k];
      }
    } else {
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t k = 0; k < mdim; ++k) {
        m1[k] = kBeta1 * m1[k] + (1.0 - kBeta1) * grad[k];
        m2[k] = kBeta2 * m2[k] + (1.0 - kBeta2) * grad[k] * grad[k];
        model.theta[k] -= opts.learning_rate * (m1[k] / bc1) /
                          (std::sqrt(m2[k] / bc2) + kEps);
      }
    }
  }

  const double final_loss = loss_and_grad(nullptr);
  if (!std::isfinite(final_loss))
    throw NonFiniteLoss("train: final loss non-finite");
  if (!exact_steps && best_loss < final_loss) model.theta = std::move(best_theta);
  return model;
}

inline nlohmann::json model_to_json(const MlpModel& m) {
  return nlohmann::json{
      {"config",
       {{"input_dim", m.config.input_dim},
        {"hidden_widths", m.config.hidden_widths}}},
      {"theta", m.theta}};
}

inline MlpModel model_from_json(const nlohmann::json& j) {
  MlpModel m;
  m.config.input_dim = j.at("config").at("input_dim").get<std::size_t>();
  m.config.hidden_widths =
      j.at("config").at("hidden_widths").get<std::vector<std::size_t>>();
  m.theta = j.at("theta").get<Vec>();
  if (m.theta.size() != m.config.param_count())
    throw ParseError("model_from_json: theta length != parameter count");
  return m;
}

}  // namespace lazyvi
