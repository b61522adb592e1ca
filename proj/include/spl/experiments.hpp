#pragma once

#include <stdexcept>

#include "spl/evaluation.hpp"

namespace spl {

// Raised for malformed configs / CLI input (exit code 2); anything else that
// escapes a run maps to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResultRow {
  std::string method;
  int rep = 0;
  std::string metric;
  double value = 0.0;
  long n_labeled = 0;
  long n_unlabeled = 0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // empty column when NaN
  std::string coverage_mode;
  std::uint64_t seed = 0;
};

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);

struct SummaryRow {
  std::string experiment;
  std::string cell;
  std::string method;
  std::string metric;
  double mean = 0.0;
  double se = 0.0;
  long count = 0;
};

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows, const std::string& experiment);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

// Resolved experiment description. Unspecified fields take the registered
// per-experiment defaults; --set overrides individual scalars afterwards.
struct ExperimentConfig {
  std::string experiment = "custom";
  std::string environment;  // "grid" | "linear_gaussian"
  std::vector<std::string> methods;
  int n_reps = 20;
  std::uint64_t seed = 0;
  int parallelism = 1;

  long n_labeled = 0;
  long n_unlabeled = -1;  // negative = derive from ratio
  double ratio = 10.0;
  std::vector<double> ratios;          // sweep over n_unlabeled / n_labeled
  std::vector<long> n_labeled_values;  // sweep over n_labeled at fixed ratio
  std::vector<double> epsilons;        // sweep over a behavior epsilon

  std::string epsilon_axis = "labeled";  // which behavior the epsilon sweep drives
  double epsilon_labeled = 0.1;          // grid: labeled behavior exploration
  std::string coverage_mode = "full";    // linear system: "full" | "partial"
  double remove_fraction = 0.8;
  double alpha = 0.05;
  double quantile = -1.0;  // negative = 0.9 full coverage, 0.3 partial
  double tabular_z = 2.0;
  double pds_beta = 0.5;

  int horizon_grid = 60;
  int horizon_linear = 30;
  int n_trees = 100;
  int tree_depth = 8;
  bool oob_residuals = false;
  bool taw_oracle = false;  // transition penalty from the true tensor vs. count bound

  int eval_trajectories = -1;  // negative = environment default
  int eval_horizon = -1;

  int n_refits = 500;  // coverage / tightness reports

  static ExperimentConfig defaults(const std::string& name);
  static ExperimentConfig from_json_file(const std::string& path);
  void apply_override(const std::string& assignment);  // "key=value"
  std::string to_json() const;                         // resolved form
};

std::vector<std::string> list_experiments();

struct RunOutputs {
  std::string results_path;
  std::string summary_path;
  std::string manifest_path;
};

RunOutputs run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace spl
