#pragma once

#include <optional>

#include "spl/environments.hpp"
#include "spl/reward_uq.hpp"

namespace spl {

// Reward-imputation strategies sharing one planner per environment family.
enum class Method { NoShare, PNoShare, PL, UDS, PDS, SPL, Oracle, PPL };

Method method_from_string(const std::string& name);
std::string to_string(Method m);

struct MethodConfig {
  double alpha = 0.05;
  double quantile = 1.0;   // SPL keeps unlabeled pairs up to this delta quantile
  double pds_beta = 0.5;
  double ridge = -1.0;
  double tabular_z = 2.0;  // lower-bound width for the discrete pipeline
  TreeEnsembleConfig aux;
  bool oob_residuals = false;
  bool taw_oracle = false;  // transition-aware penalty from the true tensor
};

struct ImputationDiagnostics {
  long n_train = 0;
  long n_unlabeled_used = 0;
  double mean_imputed = std::numeric_limits<double>::quiet_NaN();
  double mean_delta = std::numeric_limits<double>::quiet_NaN();
};

// Everything the imputation strategies may need, fitted once per dataset.
struct FittedModels {
  // continuous pipeline
  std::shared_ptr<const FeatureMap> features;
  std::shared_ptr<const PessimisticRewardModel> suq;
  std::shared_ptr<const PessimisticRewardModel> ini;
  // discrete pipeline
  std::optional<TabularLcb> lcb;
  Eigen::MatrixXd visit_counts;
  const TabularMDP* true_mdp = nullptr;
  std::vector<Eigen::MatrixXd> p_hat;  // empirical transitions for the oracle-mode penalty
  double r_max = std::numeric_limits<double>::infinity();
  double gamma = 0.99;

  bool tabular() const { return lcb.has_value(); }
};

// Fits the models required by `methods` on one dataset. For the grid this is
// the per-pair lower-bound table (plus transition statistics when PPL is
// requested); for the linear system the labeled-only and semi-supervised
// regressions on the degree-2 basis.
FittedModels fit_models(const Environment& env, const OfflineDataset& data,
                        const std::vector<Method>& methods, const MethodConfig& cfg,
                        std::uint64_t seed);

struct BuildResult {
  TrainingSet train;
  ImputationDiagnostics diag;
};

// Materializes the per-method training set:
//   NoShare   labeled tuples, observed rewards
//   PNoShare  labeled tuples, lower-bounded rewards
//   PL        union, unlabeled imputed with the point estimate
//   UDS       union, unlabeled imputed with the minimum observed reward
//   PDS       union, unlabeled imputed with the lower bound (planner adds a
//             per-pair penalty on top)
//   SPL       union, unlabeled imputed with the semi-supervised lower bound,
//             optionally quantile-filtered first
//   Oracle    same rewards as SPL; the planner swap happens in run_method
//   PPL       union, unlabeled imputed with the semi-supervised lower bound
//             minus the transition-aware penalty
BuildResult build_training_set(Method m, const OfflineDataset& data, const FittedModels& models,
                               const MethodConfig& cfg);

struct PlannerConfig {
  FqiConfig fqi;
  QLearningConfig ql;
};

PlannerConfig default_planner(const Environment& env, std::uint64_t seed);

struct MethodRun {
  Policy policy;
  ImputationDiagnostics diag;
};

// End-to-end strategy run: fit models, build the training set, then plan
// (tabular Q-learning on the grid, fitted Q iteration on the linear system,
// value iteration on the true tensor for Oracle).
MethodRun run_method(const Environment& env, const OfflineDataset& data, Method m,
                     const MethodConfig& mcfg, const PlannerConfig& pcfg, std::uint64_t seed);

}  // namespace spl
