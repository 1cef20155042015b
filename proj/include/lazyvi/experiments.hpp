#pragma once

// Experiment runner behind the command-line tool: seeded simulation studies
// (correlated linear, binary probit, high-dimensional teacher), VI on user
// CSV data, Shapley and remove-and-retrain evaluations, and the NTK trace
// diagnostic. Every run writes results.csv, results.json and a manifest
// recording the config hash, the seeds and per-method wall-clock totals.
// Statistical outputs are deterministic given config + seeds; only timing
// fields vary between identical runs.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lazyvi/analytic.hpp"
#include "lazyvi/core.hpp"
#include "lazyvi/data.hpp"
#include "lazyvi/estimators.hpp"
#include "lazyvi/network.hpp"
#include "lazyvi/roar.hpp"
#include "lazyvi/shapley.hpp"

namespace lazyvi {

struct RunConfig {
  std::string experiment;  // linear_corr | binary | highdim | csv_vi |
                           // shapley | roar | trace_check
  std::vector<std::uint64_t> seeds;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::vector<double> rho_grid;  // linear_corr
  NetworkConfig network;         // input_dim filled per experiment
  TrainOptions train;
  LazyConfig lazy{{}, 5, 0.05};  // empty grid = sqrt(n1)-scaled default
  std::vector<std::string> methods = {"dropout", "lazy", "retrain"};
  std::string skill = "neg_mse";
  std::string output_dir = ".";
  double noise_sd = 0.1;

  // csv_vi / shapley / roar on file data
  std::string data_path;
  std::string response_column;

  // highdim / roar generator
  double sigma_w = 0.3;
  std::size_t features = 100;

  // shapley
  std::size_t num_permutations = 20;
  std::string shapley_method = "lazy";
  double shapley_lambda = 50.0;
  bool shapley_exact_enum = false;

  // roar
  std::vector<double> ts = {0.1, 0.25, 0.5, 0.75, 0.9, 0.99};
  std::string ordering = "grad";

  // early-stopping variant knobs (method "lazy_es")
  std::size_t es_steps = 50;
  double es_lr = 1e-2;

  // trace_check
  std::vector<std::size_t> trace_test_sizes = {300, 600, 900, 1200};
};

namespace detail {

template <class T>
T require_field(const nlohmann::json& j, const std::string& key,
                const std::string& experiment) {
  if (!j.contains(key))
    throw ConfigError("config for experiment '" + experiment +
                      "' is missing required field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

template <class T>
void read_optional(const nlohmann::json& j, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.experiment = detail::require_field<std::string>(j, "experiment", "?");
  const std::string& ex = cfg.experiment;
  const bool known = ex == "linear_corr" || ex == "binary" || ex == "highdim" ||
                     ex == "csv_vi" || ex == "shapley" || ex == "roar" ||
                     ex == "trace_check";
  if (!known) throw ConfigError("unknown experiment '" + ex + "'");

  if (j.contains("seeds")) {
    cfg.seeds = detail::require_field<std::vector<std::uint64_t>>(j, "seeds", ex);
  } else if (j.contains("num_sims")) {
    const auto sims = detail::require_field<std::size_t>(j, "num_sims", ex);
    for (std::size_t s = 1; s <= sims; ++s) cfg.seeds.push_back(s);
  } else {
    throw ConfigError("config for experiment '" + ex +
                      "' is missing required field 'seeds'");
  }
  if (cfg.seeds.empty()) throw ConfigError("config field 'seeds' is empty");

  const bool needs_sizes = ex != "trace_check" && ex != "csv_vi";
  if (needs_sizes) {
    cfg.n = detail::require_field<std::size_t>(j, "n", ex);
    cfg.n1 = detail::require_field<std::size_t>(j, "n1", ex);
  } else if (ex == "csv_vi") {
    cfg.n1 = detail::require_field<std::size_t>(j, "n1", ex);
  }
  if (j.contains("n")) detail::read_optional(j, "n", cfg.n);
  if (needs_sizes && !(cfg.n1 > 0 && cfg.n1 < cfg.n))
    throw ConfigError("config requires 0 < n1 < n (got n1 = " +
                      std::to_string(cfg.n1) + ", n = " + std::to_string(cfg.n) +
                      ")");

  if (ex == "linear_corr") {
    if (j.contains("rho_grid"))
      cfg.rho_grid = detail::require_field<std::vector<double>>(j, "rho_grid", ex);
    else if (j.contains("rho"))
      cfg.rho_grid = {detail::require_field<double>(j, "rho", ex)};
    else
      throw ConfigError("config for experiment 'linear_corr' is missing "
                        "required field 'rho_grid' (or 'rho')");
  }
  const bool has_data = j.contains("data") && j.at("data").is_string() &&
                        !j.at("data").get<std::string>().empty();
  if (ex == "csv_vi" || (has_data && (ex == "shapley" || ex == "roar"))) {
    cfg.data_path = detail::require_field<std::string>(j, "data", ex);
    cfg.response_column = detail::require_field<std::string>(j, "response", ex);
    if (cfg.data_path.empty())
      throw ConfigError("config field 'data' must not be empty");
  }

  if (j.contains("network")) {
    const auto& net = j.at("network");
    detail::read_optional(net, "hidden_widths", cfg.network.hidden_widths);
    detail::read_optional(net, "input_dim", cfg.network.input_dim);
  }
  if (j.contains("train")) {
    const auto& tr = j.at("train");
    std::string opt = "adaptive";
    detail::read_optional(tr, "optimizer", opt);
    if (opt == "adaptive")
      cfg.train.optimizer = Optimizer::adaptive;
    else if (opt == "momentum")
      cfg.train.optimizer = Optimizer::momentum;
    else
      throw ConfigError("config field 'train.optimizer': unknown value '" +
                        opt + "'");
    detail::read_optional(tr, "learning_rate", cfg.train.learning_rate);
    detail::read_optional(tr, "epochs", cfg.train.epochs);
    if (cfg.train.epochs == 0)
      throw ConfigError("config field 'train.epochs' must be >= 1");
    if (tr.contains("early_stop_steps"))
      cfg.train.early_stop_steps = tr.at("early_stop_steps").get<std::size_t>();
  }
  if (j.contains("lazy")) {
    const auto& lz = j.at("lazy");
    detail::read_optional(lz, "lambda_grid", cfg.lazy.lambda_grid);
    detail::read_optional(lz, "cv_folds", cfg.lazy.cv_folds);
    detail::read_optional(lz, "alpha", cfg.lazy.alpha);
    if (!(cfg.lazy.alpha > 0.0 && cfg.lazy.alpha < 1.0))
      throw ConfigError("config field 'lazy.alpha' must lie in (0,1)");
  }

  detail::read_optional(j, "methods", cfg.methods);
  for (const auto& m : cfg.methods)
    if (m != "dropout" && m != "lazy" && m != "retrain" && m != "lazy_es")
      throw ConfigError("config field 'methods': unknown method '" + m + "'");
  detail::read_optional(j, "skill", cfg.skill);
  if (cfg.skill != "neg_mse" && cfg.skill != "accuracy")
    throw ConfigError("config field 'skill': must be neg_mse or accuracy");
  detail::read_optional(j, "output_dir", cfg.output_dir);
  detail::read_optional(j, "noise_sd", cfg.noise_sd);
  detail::read_optional(j, "sigma_w", cfg.sigma_w);
  detail::read_optional(j, "features", cfg.features);
  detail::read_optional(j, "num_permutations", cfg.num_permutations);
  detail::read_optional(j, "shapley_method", cfg.shapley_method);
  detail::read_optional(j, "shapley_lambda", cfg.shapley_lambda);
  detail::read_optional(j, "shapley_exact", cfg.shapley_exact_enum);
  detail::read_optional(j, "ts", cfg.ts);
  detail::read_optional(j, "ordering", cfg.ordering);
  detail::read_optional(j, "es_steps", cfg.es_steps);
  detail::read_optional(j, "es_lr", cfg.es_lr);
  detail::read_optional(j, "trace_test_sizes", cfg.trace_test_sizes);

  if (cfg.network.hidden_widths.empty()) {
    if (ex == "roar")
      cfg.network.hidden_widths = {100, 50};
    else if (ex == "trace_check")
      cfg.network.hidden_widths = {128};
    else
      cfg.network.hidden_widths = {50};
  }
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["seeds"] = c.seeds;
  j["n"] = c.n;
  j["n1"] = c.n1;
  j["rho_grid"] = c.rho_grid;
  j["network"] = {{"input_dim", c.network.input_dim},
                  {"hidden_widths", c.network.hidden_widths}};
  j["train"] = {{"optimizer", c.train.optimizer == Optimizer::adaptive
                                  ? "adaptive"
                                  : "momentum"},
                {"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs}};
  j["lazy"] = {{"lambda_grid", c.lazy.lambda_grid},
               {"cv_folds", c.lazy.cv_folds},
               {"alpha", c.lazy.alpha}};
  j["methods"] = c.methods;
  j["skill"] = c.skill;
  j["output_dir"] = c.output_dir;
  j["noise_sd"] = c.noise_sd;
  j["data"] = c.data_path;
  j["response"] = c.response_column;
  j["sigma_w"] = c.sigma_w;
  j["features"] = c.features;
  j["num_permutations"] = c.num_permutations;
  j["shapley_method"] = c.shapley_method;
  j["shapley_lambda"] = c.shapley_lambda;
  j["ts"] = c.ts;
  j["ordering"] = c.ordering;
  j["trace_test_sizes"] = c.trace_test_sizes;
  return j;
}

namespace detail {

inline SkillKind skill_kind_of(const std::string& s) {
  return s == "accuracy" ? SkillKind::accuracy : SkillKind::neg_mse;
}

// Stream seeds derived from one experiment seed.
constexpr std::uint64_t kSplitSalt = 1, kInitSalt = 2, kRetrainSalt = 16;

inline ViEstimate run_method(const std::string& method, const MlpModel& full,
                             const Split& sp, std::size_t j, SkillKind kind,
                             const RunConfig& cfg, std::uint64_t seed) {
  if (method == "dropout") return vi_dropout(full, sp, j, kind, cfg.lazy.alpha);
  if (method == "retrain") {
    TrainOptions opts = cfg.train;
    opts.seed = derive_seed(RngSeed{seed}, kRetrainSalt + j);
    return vi_retrain(full, sp, j, kind, opts, cfg.lazy.alpha);
  }
  if (method == "lazy_es")
    return vi_lazy_es(full, sp, j, kind, cfg.es_steps, cfg.es_lr,
                      cfg.lazy.alpha);
  LazyConfig lz = cfg.lazy;
  if (lz.lambda_grid.empty()) lz.lambda_grid = default_lambda_grid(sp.train.n());
  return vi_lazy(full, sp, j, kind, lz);
}

}  // namespace detail

// ---- linear_corr (correlated linear simulation) ----

struct LinearCorrRow {
  double rho = 0.0;
  std::uint64_t seed = 0;
  ViEstimate est;
  double theoretical_gap = 0.0;
};

/// Analytic description of the correlated linear generator at a given rho.
inline LinearModelSpec linear_corr_spec(double rho) {
  LinearModelSpec spec;
  spec.sigma = Matrix::identity(6);
  spec.sigma(0, 1) = rho;
  spec.sigma(1, 0) = rho;
  spec.beta_true = Vec{1.5, 1.2, 1.0, 0.0, 0.0, 0.0};
  spec.exy = matvec(spec.sigma, *spec.beta_true);
  spec.noise_var = 0.01;
  return spec;
}

inline void run_linear_corr(const RunConfig& cfg,
                            std::vector<LinearCorrRow>& rows) {
  NetworkConfig net = cfg.network;
  net.input_dim = 6;
  for (double rho : cfg.rho_grid) {
    const LinearModelSpec spec = linear_corr_spec(rho);
    Vec gaps(6);
    for (std::size_t j = 0; j < 6; ++j) gaps[j] = dropout_retrain_gap(spec, j);
    for (std::uint64_t seed : cfg.seeds) {
      const Dataset data =
          gen_linear_corr(cfg.n, rho, RngSeed{seed}, cfg.noise_sd);
      const Split sp =
          split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
      TrainOptions opts = cfg.train;
      opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
      const MlpModel full = train(init(net, opts.seed), sp.train, opts);
      for (std::size_t j = 0; j < 6; ++j) {
        for (const auto& method : cfg.methods) {
          LinearCorrRow row;
          row.rho = rho;
          row.seed = seed;
          row.est = detail::run_method(method, full, sp, j,
                                       SkillKind::neg_mse, cfg, seed);
          row.theoretical_gap = gaps[j];
          rows.push_back(std::move(row));
        }
      }
    }
  }
}

// ---- binary (probit classification simulation) ----

struct SimEstimate {
  std::uint64_t seed = 0;
  ViEstimate est;
};

struct CoverageRow {
  std::size_t variable = 0;  // 0-based
  std::string method;
  double coverage = 0.0;
  double bias = 0.0;     // truth - mean estimate
  double truth = 0.0;
  double mean_vi = 0.0;
};

/// Per-variable fraction of intervals containing the truth and mean bias.
inline std::vector<CoverageRow> summarize_coverage(
    const std::vector<SimEstimate>& sims, const Vec& truths) {
  if (truths.empty())
    throw MissingTruth("summarize_coverage: no analytic truth available");
  std::map<std::pair<std::size_t, std::string>, std::vector<const ViEstimate*>>
      groups;
  for (const auto& s : sims) {
    if (s.est.variable >= truths.size())
      throw MissingTruth("summarize_coverage: no truth for variable " +
                         std::to_string(s.est.variable + 1));
    groups[{s.est.variable, to_string(s.est.method)}].push_back(&s.est);
  }
  std::vector<CoverageRow> out;
  for (const auto& [key, ests] : groups) {
    CoverageRow row;
    row.variable = key.first;
    row.method = key.second;
    row.truth = truths[key.first];
    double covered = 0.0, sum_vi = 0.0;
    for (const ViEstimate* e : ests) {
      if (e->ci_lo <= row.truth && row.truth <= e->ci_hi) covered += 1.0;
      sum_vi += e->vi_hat;
    }
    row.coverage = covered / static_cast<double>(ests.size());
    row.mean_vi = sum_vi / static_cast<double>(ests.size());
    row.bias = row.truth - row.mean_vi;
    out.push_back(std::move(row));
  }
  return out;
}

inline const Vec& binary_truths() {
  static const Vec t = {0.136, 0.236, 0.0, 0.0};
  return t;
}

inline void run_binary(const RunConfig& cfg, std::vector<SimEstimate>& sims) {
  NetworkConfig net = cfg.network;
  net.input_dim = 4;
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset data = gen_binary_probit(cfg.n, RngSeed{seed});
    const Split sp =
        split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
    TrainOptions opts = cfg.train;
    opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
    const MlpModel full = train(init(net, opts.seed), sp.train, opts);
    for (std::size_t j = 0; j < 4; ++j)
      for (const auto& method : cfg.methods)
        sims.push_back({seed, detail::run_method(method, full, sp, j,
                                                 SkillKind::accuracy, cfg,
                                                 seed)});
  }
}

// ---- highdim (nonlinear teacher, importance of X1) ----

struct HighdimRow {
  std::uint64_t seed = 0;
  ViEstimate est;
};

inline void run_highdim(const RunConfig& cfg, std::vector<HighdimRow>& rows) {
  NetworkConfig net = cfg.network;
  net.input_dim = cfg.features;
  TeacherOptions teacher;
  teacher.p = cfg.features;
  teacher.noise_sd = cfg.noise_sd;
  for (std::uint64_t seed : cfg.seeds) {
    const Dataset data =
        gen_highdim_teacher(cfg.n, cfg.sigma_w, RngSeed{seed}, teacher);
    const Split sp =
        split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
    TrainOptions opts = cfg.train;
    opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
    const MlpModel full = train(init(net, opts.seed), sp.train, opts);
    for (const auto& method : cfg.methods)
      rows.push_back({seed, detail::run_method(method, full, sp, 0,
                                               SkillKind::neg_mse, cfg, seed)});
  }
}

// ---- csv_vi (user data) ----

inline void run_csv_vi(const RunConfig& cfg, std::vector<ViEstimate>& rows,
                       std::vector<std::string>* names_out = nullptr) {
  const Dataset data = load_csv(cfg.data_path, cfg.response_column);
  if (names_out) *names_out = data.feature_names;
  if (!(cfg.n1 > 0 && cfg.n1 < data.n()))
    throw ConfigError("config requires 0 < n1 < rows in data (n1 = " +
                      std::to_string(cfg.n1) + ", rows = " +
                      std::to_string(data.n()) + ")");
  const std::uint64_t seed = cfg.seeds.front();
  const Split sp =
      split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
  NetworkConfig net = cfg.network;
  net.input_dim = data.p();
  TrainOptions opts = cfg.train;
  opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
  const MlpModel full = train(init(net, opts.seed), sp.train, opts);
  const SkillKind kind = detail::skill_kind_of(cfg.skill);
  for (std::size_t j = 0; j < data.p(); ++j)
    for (const auto& method : cfg.methods)
      rows.push_back(detail::run_method(method, full, sp, j, kind, cfg, seed));
}

// ---- shapley ----

struct ShapleyRunResult {
  ShapleyEstimate estimate;
  std::vector<std::string> names;
  double seconds = 0.0;
};

inline void run_shapley(const RunConfig& cfg, ShapleyRunResult& out) {
  detail::Stopwatch clock;
  Dataset data;
  if (!cfg.data_path.empty()) {
    data = load_csv(cfg.data_path, cfg.response_column);
  } else {
    TeacherOptions teacher;
    teacher.p = cfg.features;
    teacher.noise_sd = cfg.noise_sd;
    data = gen_highdim_teacher(cfg.n, cfg.sigma_w, RngSeed{cfg.seeds.front()},
                               teacher);
  }
  out.names = data.feature_names;
  const std::uint64_t seed = cfg.seeds.front();
  const Split sp =
      split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
  NetworkConfig net = cfg.network;
  net.input_dim = data.p();
  TrainOptions opts = cfg.train;
  opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
  const MlpModel full = train(init(net, opts.seed), sp.train, opts);

  ShapleyOptions sopts;
  sopts.lazy.lambda_grid = {cfg.shapley_lambda};
  sopts.train = cfg.train;
  sopts.train.seed = derive_seed(RngSeed{seed}, detail::kRetrainSalt);
  sopts.skill = detail::skill_kind_of(cfg.skill);
  const RefitMethod method = cfg.shapley_method == "retrain"
                                 ? RefitMethod::retrain
                                 : RefitMethod::lazy;
  out.estimate =
      cfg.shapley_exact_enum
          ? shapley_exact(full, sp, sopts, method)
          : shapley_sampled(full, sp, sopts, cfg.num_permutations,
                            derive_seed(RngSeed{seed}, 7), method);
  out.seconds = clock.seconds();
}

// ---- roar ----

struct RoarRunRow {
  std::uint64_t seed = 0;
  RoarPoint point;
};

inline void run_roar(const RunConfig& cfg, std::vector<RoarRunRow>& rows) {
  RoarOptions ropts;
  ropts.train = cfg.train;
  ropts.lazy = cfg.lazy;
  std::vector<std::string> methods;
  for (const auto& m : cfg.methods)
    if (m != "lazy_es") methods.push_back(m);
  for (std::uint64_t seed : cfg.seeds) {
    Dataset data;
    if (!cfg.data_path.empty()) {
      data = load_csv(cfg.data_path, cfg.response_column);
    } else {
      TeacherOptions teacher;
      teacher.p = cfg.features;
      teacher.noise_sd = cfg.noise_sd;
      data = gen_highdim_teacher(cfg.n, cfg.sigma_w, RngSeed{seed}, teacher);
    }
    const Split sp =
        split(data, cfg.n1, derive_seed(RngSeed{seed}, detail::kSplitSalt));
    NetworkConfig net = cfg.network;
    net.input_dim = data.p();
    ropts.train.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
    const MlpModel full = train(init(net, ropts.train.seed), sp.train,
                                ropts.train);
    Ordering ord;
    if (cfg.ordering == "random")
      ord = random_ordering(data.p(), derive_seed(RngSeed{seed}, 11));
    else
      ord = grad_saliency(full, sp.train);
    const RoarCurve curve = roar_curve(full, sp, ord, cfg.ts, methods, ropts);
    for (const auto& pt : curve.points) rows.push_back({seed, pt});
  }
}

// ---- trace_check ----

struct TraceRow {
  std::uint64_t seed = 0;
  std::size_t n_test = 0;
  double trace = 0.0;
};

inline void run_trace_check(const RunConfig& cfg, std::vector<TraceRow>& rows) {
  NetworkConfig net = cfg.network;
  net.input_dim = 6;
  for (std::uint64_t seed : cfg.seeds) {
    for (std::size_t n_test : cfg.trace_test_sizes) {
      const std::size_t n_total = 3 * n_test;
      const Dataset data = gen_linear_corr(n_total, 0.5, RngSeed{seed},
                                           cfg.noise_sd);
      const Split sp = split(data, n_total - n_test,
                             derive_seed(RngSeed{seed}, detail::kSplitSalt));
      TrainOptions opts = cfg.train;
      opts.seed = derive_seed(RngSeed{seed}, detail::kInitSalt);
      const MlpModel full = train(init(net, opts.seed), sp.train, opts);
      const Dataset test_t = dropout_transform(sp.test, 0);
      rows.push_back({seed, n_test, ntk_trace(full, test_t.X)});
    }
  }
}

/// Least-squares line of trace against test size across all recorded rows.
inline LinearFit trace_fit(const std::vector<TraceRow>& rows) {
  Vec x, y;
  for (const auto& r : rows) {
    x.push_back(static_cast<double>(r.n_test));
    y.push_back(r.trace);
  }
  return fit_line(x, y);
}

// ---- orchestration ----

namespace detail {

inline std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct RunArtifacts {
  std::string results_csv;
  nlohmann::json results_json = nlohmann::json::array();
  std::map<std::string, double> method_seconds;
};

inline void note_seconds(RunArtifacts& art, const ViEstimate& e) {
  art.method_seconds[to_string(e.method)] += e.seconds;
}

}  // namespace detail

/// Execute the configured experiment, writing results.csv, results.json and
/// manifest.json under output_dir. Returns the process exit code: 0 on
/// success, 2 on configuration errors, 3 on numerical failure (partial
/// results are still flushed).
inline int run(const RunConfig& cfg, std::ostream& err = std::cerr) {
  detail::RunArtifacts art;
  int code = 0;
  std::string failure;

  auto guard = [&](auto&& body) {
    try {
      body();
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n";
      code = 2;
    } catch (const Error& e) {
      err << "numerical failure: " << e.what() << "\n";
      failure = e.what();
      code = 3;
    }
  };

  if (cfg.experiment == "linear_corr") {
    std::vector<LinearCorrRow> rows;
    guard([&] { run_linear_corr(cfg, rows); });
    art.results_csv = "rho,variable,method,vi,se,ci_lo,ci_hi,theoretical_gap\n";
    for (const auto& r : rows) {
      const auto& e = r.est;
      art.results_csv += detail::fmt(r.rho, "%.6g") + "," +
                         std::to_string(e.variable + 1) + "," +
                         to_string(e.method) + "," + detail::fmt(e.vi_hat) +
                         "," + detail::fmt(e.tau_hat) + "," +
                         detail::fmt(e.ci_lo) + "," + detail::fmt(e.ci_hi) +
                         "," + detail::fmt(r.theoretical_gap) + "\n";
      auto j = to_json(e);
      j["rho"] = r.rho;
      j["seed"] = r.seed;
      j["theoretical_gap"] = r.theoretical_gap;
      art.results_json.push_back(std::move(j));
      detail::note_seconds(art, e);
    }
  } else if (cfg.experiment == "binary") {
    std::vector<SimEstimate> sims;
    guard([&] { run_binary(cfg, sims); });
    art.results_csv = "variable,method,coverage,bias,truth,mean_vi\n";
    if (!sims.empty()) {
      for (const auto& row : summarize_coverage(sims, binary_truths())) {
        art.results_csv += std::to_string(row.variable + 1) + "," + row.method +
                           "," + detail::fmt(row.coverage) + "," +
                           detail::fmt(row.bias) + "," +
                           detail::fmt(row.truth) + "," +
                           detail::fmt(row.mean_vi) + "\n";
      }
    }
    for (const auto& s : sims) {
      auto j = to_json(s.est);
      j["seed"] = s.seed;
      art.results_json.push_back(std::move(j));
      detail::note_seconds(art, s.est);
    }
  } else if (cfg.experiment == "highdim") {
    std::vector<HighdimRow> rows;
    guard([&] { run_highdim(cfg, rows); });
    std::map<std::uint64_t, double> retrain_vi;
    for (const auto& r : rows)
      if (r.est.method == ViMethod::retrain) retrain_vi[r.seed] = r.est.vi_hat;
    art.results_csv = "seed,method,vi,se,seconds,rel_error_vs_retrain\n";
    for (const auto& r : rows) {
      std::string rel;
      const auto it = retrain_vi.find(r.seed);
      if (it != retrain_vi.end() && it->second != 0.0)
        rel = detail::fmt((r.est.vi_hat - it->second) / it->second);
      art.results_csv += std::to_string(r.seed) + "," +
                         to_string(r.est.method) + "," +
                         detail::fmt(r.est.vi_hat) + "," +
                         detail::fmt(r.est.tau_hat) + "," +
                         detail::fmt(r.est.seconds, "%.6f") + "," + rel + "\n";
      auto j = to_json(r.est);
      j["seed"] = r.seed;
      art.results_json.push_back(std::move(j));
      detail::note_seconds(art, r.est);
    }
  } else if (cfg.experiment == "csv_vi") {
    std::vector<ViEstimate> rows;
    guard([&] { run_csv_vi(cfg, rows); });
    art.results_csv = estimates_csv(rows);
    for (const auto& e : rows) {
      art.results_json.push_back(to_json(e));
      detail::note_seconds(art, e);
    }
  } else if (cfg.experiment == "shapley") {
    ShapleyRunResult res;
    guard([&] { run_shapley(cfg, res); });
    art.results_csv = shapley_csv(res.estimate, res.names);
    art.results_json = to_json(res.estimate);
    art.results_json["method"] = cfg.shapley_method;
    art.method_seconds[cfg.shapley_method] += res.seconds;
  } else if (cfg.experiment == "roar") {
    std::vector<RoarRunRow> rows;
    guard([&] { run_roar(cfg, rows); });
    art.results_csv = "t,method,mse,seconds\n";
    for (const auto& r : rows) {
      art.results_csv += detail::fmt(r.point.t, "%.6g") + "," +
                         r.point.method + "," + detail::fmt(r.point.mse) +
                         "," + detail::fmt(r.point.seconds, "%.6f") + "\n";
      art.results_json.push_back(nlohmann::json{{"seed", r.seed},
                                                {"t", r.point.t},
                                                {"method", r.point.method},
                                                {"mse", r.point.mse},
                                                {"seconds", r.point.seconds}});
      art.method_seconds[r.point.method] += r.point.seconds;
    }
  } else if (cfg.experiment == "trace_check") {
    std::vector<TraceRow> rows;
    guard([&] { run_trace_check(cfg, rows); });
    art.results_csv = "n_test,trace,trace_over_n\n";
    for (const auto& r : rows) {
      art.results_csv += std::to_string(r.n_test) + "," +
                         detail::fmt(r.trace) + "," +
                         detail::fmt(r.trace / static_cast<double>(r.n_test)) +
                         "\n";
      art.results_json.push_back(nlohmann::json{{"seed", r.seed},
                                                {"n_test", r.n_test},
                                                {"trace", r.trace}});
    }
    if (rows.size() >= 2) {
      const LinearFit fit = trace_fit(rows);
      art.results_json = nlohmann::json{{"rows", art.results_json},
                                        {"fit",
                                         {{"slope", fit.slope},
                                          {"intercept", fit.intercept},
                                          {"r2", fit.r2}}}};
    }
  } else {
    err << "config error: unknown experiment '" << cfg.experiment << "'\n";
    return 2;
  }

  if (code == 2) return 2;

  std::error_code fs_err;
  std::filesystem::create_directories(cfg.output_dir, fs_err);
  const auto out_path = [&](const std::string& name) {
    return (std::filesystem::path(cfg.output_dir) / name).string();
  };
  {
    std::ofstream csv(out_path("results.csv"));
    csv << art.results_csv;
  }
  {
    std::ofstream js(out_path("results.json"));
    js << art.results_json.dump(2) << "\n";
  }
  {
    nlohmann::json manifest;
    const std::string canonical = run_config_to_json(cfg).dump();
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(canonical)));
    manifest["config_hash"] = hash;
    manifest["seeds"] = cfg.seeds;
    manifest["experiment"] = cfg.experiment;
    manifest["wall_clock_seconds"] = art.method_seconds;
    if (!failure.empty()) manifest["error"] = failure;
    std::ofstream mf(out_path("manifest.json"));
    mf << manifest.dump(2) << "\n";
  }
  return code;
}

/// Load, parse and run a JSON config file. Exit code semantics as above.
inline int run(const std::string& config_path, std::ostream& err = std::cerr) {
  std::ifstream in(config_path);
  if (!in) {
    err << "config error: cannot open " << config_path << "\n";
    return 2;
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << config_path << " is not valid JSON: "
        << e.what() << "\n";
    return 2;
  }
  RunConfig cfg;
  try {
    cfg = parse_run_config(j);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }
  return run(cfg, err);
}

}  // namespace lazyvi
