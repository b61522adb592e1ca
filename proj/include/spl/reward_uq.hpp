#pragma once

#include <limits>
#include <memory>

#include "spl/features.hpp"
#include "spl/policy_learning.hpp"

namespace spl {

// Ridge-stabilized OLS with an HC0 sandwich second moment, scaled so that
// Var(theta_hat) ~ sandwich / n.
struct OlsFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd sandwich;
  long n = 0;
  double ridge = 0.0;

  // sqrt(g' sandwich g / n)
  double halfwidth(const Eigen::VectorXd& g) const;
};

double default_ridge(const Eigen::MatrixXd& X);  // 1e-8 * trace(X'X) / d

// Throws std::runtime_error("rank-deficient design; increase ridge") when the
// regularized Gram matrix has condition number above 1e12.
OlsFit fit_ols_sandwich(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double ridge);

struct TreeEnsembleConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 2;
  bool bootstrap = true;  // resample n rows with replacement per tree
  std::uint64_t seed = 0;
};

// Bagged regression trees used as the auxiliary reward model. Deterministic
// given the config seed (per-tree seeds are derived from it).
class BaggedTrees {
 public:
  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeEnsembleConfig& cfg);
  double predict(const Eigen::VectorXd& x) const;
  // Out-of-bag predictions for the training rows; rows that appear in every
  // bag fall back to the full-ensemble prediction.
  Eigen::VectorXd oob_training_predictions() const;
  Eigen::VectorXd training_predictions() const;
  int n_trees() const { return static_cast<int>(trees_.size()); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  double predict_tree(const Tree& t, const Eigen::VectorXd& x) const;

  std::vector<Tree> trees_;
  std::vector<std::vector<char>> in_bag_;  // per tree, per training row
  Eigen::MatrixXd train_x_;
};

struct SuqConfig {
  TreeEnsembleConfig aux;
  double alpha = 0.05;
  double ridge = -1.0;  // negative = default stabilizer
  double r_max = std::numeric_limits<double>::infinity();
  bool oob_residuals = false;  // true swaps in out-of-bag auxiliary predictions
  RewardFn aux_override;      // replaces the fitted forest when set
};

// Linear reward belief with a pessimistic lower bound. In Suq mode theta is
// the sum of the labeled residual fit and the unlabeled surrogate fit and
// delta combines both sandwiches; in IniOnly mode everything comes from the
// labeled regression alone.
struct PessimisticRewardModel {
  enum class Mode { Suq, IniOnly };

  Mode mode = Mode::Suq;
  Eigen::VectorXd theta;
  Eigen::MatrixXd sigma_l;
  Eigen::MatrixXd sigma_u;  // zero-sized in IniOnly mode
  long n_l = 0, n_u = 0;
  double alpha = 0.05;
  double z = 1.959963984540054;  // standard normal quantile at 1 - alpha/2
  double r_max = std::numeric_limits<double>::infinity();
  std::shared_ptr<const FeatureMap> features;
  std::shared_ptr<const BaggedTrees> aux;

  struct Prediction {
    double r_hat = 0.0;   // point estimate g' theta
    double delta = 0.0;   // uncertainty halfwidth
    double r_pess = 0.0;  // r_hat - z * delta, clipped to [-r_max, r_max]
  };

  double r_hat(const Vec2& s, int a) const;
  double delta(const Vec2& s, int a) const;
  Prediction predict(const Vec2& s, int a) const;

  void save_csv(const std::string& path) const;
};

// Two-regression semi-supervised fit: an auxiliary forest on the labeled
// slice, OLS of its residuals on g over the labeled slice, and OLS of its
// predictions on g over the unlabeled slice.
PessimisticRewardModel suq_fit(const OfflineDataset& data, std::shared_ptr<const FeatureMap> features,
                               const SuqConfig& cfg);

// Labeled-data-only baseline fit of observed rewards on g.
PessimisticRewardModel ini_fit(const OfflineDataset& data, std::shared_ptr<const FeatureMap> features,
                               double alpha = 0.05, double ridge = -1.0,
                               double r_max = std::numeric_limits<double>::infinity());

// Per-pair empirical lower confidence bound for discrete state spaces:
// mean - z * sd with the population convention (divide by the visit count).
// Unvisited pairs fall back to the global minimum labeled reward (lcb) and
// the global mean labeled reward (mean).
struct TabularLcb {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd sd;
  Eigen::MatrixXd lcb;
  Eigen::MatrixXd count;
  double z = 2.0;
  double fallback_lcb = 0.0;
  double fallback_mean = 0.0;
};

TabularLcb tabular_reward_lcb(const OfflineDataset& data, const StateCodec& codec, int n_states,
                              int n_actions, double z = 2.0);

// Drops unlabeled tuples whose delta exceeds the empirical q-quantile of
// delta over the unlabeled slice (order statistic at ceil(q n) - 1).
OfflineDataset filter_by_uncertainty_quantile(const OfflineDataset& data,
                                              const PessimisticRewardModel& model, double q);

Eigen::MatrixXd pair_visit_counts(const OfflineDataset& data, const StateCodec& codec, int n_states,
                                  int n_actions);

// Row-normalized empirical next-state frequencies; unvisited pairs get a
// uniform row.
std::vector<Eigen::MatrixXd> empirical_transition(const OfflineDataset& data, const StateCodec& codec,
                                                  int n_states, int n_actions);

// Transition-aware reward penalty gamma * V_max * ||p_hat - p_true||_1 with
// V_max = r_max / (1 - gamma).
double taw_penalty(const std::vector<Eigen::MatrixXd>& p_hat, const std::vector<Eigen::MatrixXd>& p_true,
                   double gamma, double r_max, int s, int a);

// Data-driven substitute bounding the L1 gap by
// min(2, sqrt(2 |S| ln(2/alpha) / max(1, N(s,a)))).
double taw_penalty_bound(const Eigen::MatrixXd& visit_counts, double alpha, double gamma, double r_max,
                         int s, int a);

}  // namespace spl
