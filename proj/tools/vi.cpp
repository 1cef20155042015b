// Command-line front end. Subcommands mirror the experiment runner:
//
//   vi run <config.json> [overrides]   full experiment from a JSON config
//   vi csv --data f.csv --response y   variable importance on tabular data
//   vi trace-check                     NTK trace growth diagnostic
//   vi shapley                         Shapley attribution
//   vi roar                            remove-and-retrain curve
//
// Flag overrides mirror config paths. LAZYVI_OUTPUT_DIR sets the default
// output directory. Exit codes: 0 success, 2 config error, 3 numerical
// failure (partial results flushed).

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lazyvi/lazyvi.hpp"

namespace {

std::string default_output_dir() {
  const char* env = std::getenv("LAZYVI_OUTPUT_DIR");
  return env ? env : ".";
}

struct CommonFlags {
  std::vector<std::uint64_t> seeds;
  std::size_t n = 0, n1 = 0;
  std::string output_dir;
  std::vector<std::size_t> hidden_widths;
  double learning_rate = 0.0;
  std::size_t epochs = 0;
  std::vector<double> lambda_grid;
  std::vector<std::string> methods;
  std::string skill;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seeds", f.seeds, "experiment seeds");
  cmd->add_option("--n", f.n, "total sample size");
  cmd->add_option("--n1", f.n1, "training split size");
  cmd->add_option("--output-dir", f.output_dir, "output directory");
  cmd->add_option("--hidden-widths", f.hidden_widths, "network hidden widths");
  cmd->add_option("--learning-rate", f.learning_rate, "trainer learning rate");
  cmd->add_option("--epochs", f.epochs, "trainer epochs");
  cmd->add_option("--lambda-grid", f.lambda_grid, "ridge penalty candidates");
  cmd->add_option("--methods", f.methods, "estimators to run");
  cmd->add_option("--skill", f.skill, "skill measure (neg_mse | accuracy)");
}

// Flag overrides are merged into the JSON document before validation, so a
// field supplied only on the command line satisfies the config contract.
void merge_common(const CommonFlags& f, nlohmann::json& j) {
  if (!f.seeds.empty()) j["seeds"] = f.seeds;
  if (f.n) j["n"] = f.n;
  if (f.n1) j["n1"] = f.n1;
  if (!f.output_dir.empty()) j["output_dir"] = f.output_dir;
  if (!f.hidden_widths.empty()) j["network"]["hidden_widths"] = f.hidden_widths;
  if (f.learning_rate > 0.0) j["train"]["learning_rate"] = f.learning_rate;
  if (f.epochs) j["train"]["epochs"] = f.epochs;
  if (!f.lambda_grid.empty()) j["lazy"]["lambda_grid"] = f.lambda_grid;
  if (!f.methods.empty()) j["methods"] = f.methods;
  if (!f.skill.empty()) j["skill"] = f.skill;
}

int run_json(nlohmann::json j, const CommonFlags& f) {
  if (!j.contains("output_dir")) j["output_dir"] = default_output_dir();
  merge_common(f, j);
  lazyvi::RunConfig cfg;
  try {
    cfg = lazyvi::parse_run_config(j);
  } catch (const lazyvi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return lazyvi::run(cfg);
}

int run_from_file(const std::string& path, const CommonFlags& f,
                  const std::string& experiment_override, double rho,
                  bool rho_set) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "config error: cannot open " << path << "\n";
    return 2;
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << path << " is not valid JSON: " << e.what()
              << "\n";
    return 2;
  }
  if (!experiment_override.empty()) j["experiment"] = experiment_override;
  if (rho_set) j["rho"] = rho;
  return run_json(std::move(j), f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable importance for feedforward networks: dropout, "
               "retrain and lazy (linearized ridge) estimators"};
  app.require_subcommand(1);

  // vi run
  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  std::string config_path;
  run_cmd->add_option("config", config_path, "JSON config file")->required();
  std::string experiment_override;
  run_cmd->add_option("--experiment", experiment_override,
                      "override the experiment name");
  double rho = 0.0;
  auto* rho_opt = run_cmd->add_option("--rho", rho, "override rho");
  CommonFlags run_flags;
  add_common(run_cmd, run_flags);

  // vi csv
  auto* csv_cmd = app.add_subcommand("csv", "variable importance on CSV data");
  std::string data_path, response;
  std::string csv_method = "lazy";
  csv_cmd->add_option("--data", data_path, "CSV file with header")->required();
  csv_cmd->add_option("--response", response, "response column name")
      ->required();
  csv_cmd->add_option("--method", csv_method,
                      "estimator (lazy | dropout | retrain)");
  CommonFlags csv_flags;
  add_common(csv_cmd, csv_flags);

  // vi trace-check
  auto* trace_cmd =
      app.add_subcommand("trace-check", "NTK trace growth diagnostic");
  std::vector<std::size_t> trace_sizes;
  trace_cmd->add_option("--test-sizes", trace_sizes, "test sample sizes");
  CommonFlags trace_flags;
  add_common(trace_cmd, trace_flags);

  // vi shapley
  auto* shap_cmd = app.add_subcommand("shapley", "Shapley attribution");
  std::size_t num_permutations = 0;
  std::string shap_method = "lazy";
  double shap_lambda = 0.0;
  bool shap_exact = false;
  shap_cmd->add_option("--permutations", num_permutations,
                       "sampled permutations");
  shap_cmd->add_option("--method", shap_method, "refit method");
  shap_cmd->add_option("--lambda", shap_lambda, "fixed coalition penalty");
  shap_cmd->add_flag("--exact", shap_exact, "exact enumeration (p <= 12)");
  std::string shap_data, shap_response;
  shap_cmd->add_option("--data", shap_data, "CSV data (default: synthetic)");
  shap_cmd->add_option("--response", shap_response, "response column");
  std::size_t shap_features = 0;
  shap_cmd->add_option("--features", shap_features, "synthetic feature count");
  CommonFlags shap_flags;
  add_common(shap_cmd, shap_flags);

  // vi roar
  auto* roar_cmd = app.add_subcommand("roar", "remove-and-retrain curve");
  std::vector<double> ts;
  std::string ordering = "grad";
  roar_cmd->add_option("--ts", ts, "removal proportions");
  roar_cmd->add_option("--ordering", ordering, "grad | random");
  std::string roar_data, roar_response;
  roar_cmd->add_option("--data", roar_data, "CSV data (default: synthetic)");
  roar_cmd->add_option("--response", roar_response, "response column");
  std::size_t roar_features = 0;
  roar_cmd->add_option("--features", roar_features, "synthetic feature count");
  CommonFlags roar_flags;
  add_common(roar_cmd, roar_flags);

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed())
    return run_from_file(config_path, run_flags, experiment_override, rho,
                         rho_opt->count() > 0);

  if (csv_cmd->parsed()) {
    lazyvi::RunConfig cfg;
    cfg.experiment = "csv_vi";
    cfg.data_path = data_path;
    cfg.response_column = response;
    cfg.methods = {csv_method};
    cfg.seeds = {1};
    return run_json(lazyvi::run_config_to_json(cfg), csv_flags);
  }

  if (trace_cmd->parsed()) {
    lazyvi::RunConfig cfg;
    cfg.experiment = "trace_check";
    cfg.network.hidden_widths = {128};
    cfg.seeds = {1};
    if (!trace_sizes.empty()) cfg.trace_test_sizes = trace_sizes;
    return run_json(lazyvi::run_config_to_json(cfg), trace_flags);
  }

  if (shap_cmd->parsed()) {
    lazyvi::RunConfig cfg;
    cfg.experiment = "shapley";
    cfg.seeds = {1};
    cfg.n = 750;
    cfg.n1 = 500;
    cfg.features = 20;
    if (num_permutations) cfg.num_permutations = num_permutations;
    cfg.shapley_method = shap_method;
    if (shap_lambda > 0.0) cfg.shapley_lambda = shap_lambda;
    cfg.shapley_exact_enum = shap_exact;
    cfg.data_path = shap_data;
    cfg.response_column = shap_response;
    if (shap_features) cfg.features = shap_features;
    return run_json(lazyvi::run_config_to_json(cfg), shap_flags);
  }

  if (roar_cmd->parsed()) {
    lazyvi::RunConfig cfg;
    cfg.experiment = "roar";
    cfg.seeds = {1};
    cfg.n = 1000;
    cfg.n1 = 667;
    cfg.network.hidden_widths = {100, 50};
    if (!ts.empty()) cfg.ts = ts;
    cfg.ordering = ordering;
    cfg.data_path = roar_data;
    cfg.response_column = roar_response;
    if (roar_features) cfg.features = roar_features;
    return run_json(lazyvi::run_config_to_json(cfg), roar_flags);
  }

  return 0;
}
