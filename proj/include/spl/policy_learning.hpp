#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "spl/core_mdp.hpp"
#include "spl/features.hpp"

namespace spl {

using RewardFn = std::function<double(const Vec2&, int)>;
using StateProjection = std::function<Vec2(const Vec2&)>;

// Action-value function, either an explicit table over discrete states or a
// linear form in a feature map. Evaluations are clipped to [-v_max, v_max].
struct QFunction {
  Eigen::MatrixXd table;  // n_states x n_actions when tabular
  StateCodec codec = StateCodec::identity();
  Eigen::VectorXd weights;
  std::shared_ptr<const FeatureMap> features;
  int n_actions = 0;
  double gamma = 0.99;
  double v_max = std::numeric_limits<double>::infinity();

  bool is_tabular() const { return table.size() > 0; }
  double value(const Vec2& s, int a) const;
  double max_value(const Vec2& s) const;
  int greedy(const Vec2& s) const;  // ties broken toward the lowest action index

  void save_csv(const std::string& path) const;
};

Policy greedy_policy(QFunction q);

// Exact Q iteration on a tabular model with the supplied reward table.
// Stops when the sup-norm Bellman residual falls below tol; throws when the
// iteration cap is hit first.
QFunction value_iteration(const TabularMDP& mdp, const Eigen::MatrixXd& reward, double tol = 1e-10,
                          int max_iter = 100000);

struct ImputedTuple {
  Vec2 s;
  int a = 0;
  double r = 0.0;
  Vec2 s_next;
};

// Reward-imputed transitions ready for a planner. Weights (empty = all 1)
// scale individual rows in the fitted-Q regression.
struct TrainingSet {
  std::vector<ImputedTuple> tuples;
  std::vector<double> weights;

  long size() const { return static_cast<long>(tuples.size()); }
};

struct FqiConfig {
  double gamma = 0.99;
  int max_iter = 500;
  double tol = 1e-6;       // relative L1 change of Q over the training pairs
  double ridge = -1.0;     // negative = 1e-8 * trace(X'X)/d
  double v_max = std::numeric_limits<double>::infinity();
  RewardFn target_penalty;  // optional per-pair amount subtracted from targets
};

// Fitted Q iteration with ridge-stabilized least squares regression of
// Bellman targets on g(s, a), starting from Q = 0.
QFunction fqi(const TrainingSet& data, std::shared_ptr<const FeatureMap> features, const FqiConfig& cfg);

struct QLearningConfig {
  double gamma = 0.95;
  double lr = 0.001;
  long n_updates = 60000;
  double v_max = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  RewardFn target_penalty;
};

// Tabular Q-learning over a fixed tuple set, sampling tuples uniformly with
// replacement.
QFunction tabular_q_learning(const TrainingSet& data, const StateCodec& codec, int n_states,
                             int n_actions, const QLearningConfig& cfg);

// Per-action linear-Gaussian transition model s' ~ N(A s + b, diag(cov)).
struct TransitionModel {
  std::vector<Eigen::Matrix2d> A;
  std::vector<Vec2> b;
  std::vector<Vec2> cov_diag;

  Vec2 predict_mean(const Vec2& s, int a) const;
  Vec2 sample(const Vec2& s, int a, Rng& rng) const;
};

// Least squares with intercept per action over all (s, a, s') triples.
// Throws when an action has fewer than three triples.
TransitionModel fit_transition_model(const OfflineDataset& data, int n_actions);

// Clamps a state to the nearest valid grid cell / state index.
StateProjection grid_projection(int side);
StateProjection index_projection(int n_states);

// Synthetic transitions from the learned model: from each start state, roll
// the policy for `horizon` steps, labeling rewards with reward_fn and
// projecting sampled states when a projection is given.
TrainingSet model_rollout(const TransitionModel& model, const RewardFn& reward_fn,
                          const std::vector<Vec2>& starts, const Policy& policy, int horizon, Rng& rng,
                          const StateProjection& project = nullptr);

struct MbSplConfig {
  FqiConfig fqi;
  int rollout_horizon = 5;
  int n_rollout_starts = 50;   // start states drawn per outer iteration
  int outer_cap = 50;
  int stable_needed = 3;       // consecutive unchanged greedy policies to stop
  double synthetic_weight = 1.0;
  std::uint64_t seed = 0;
  StateProjection project;
};

struct MbSplResult {
  QFunction q;
  Policy policy;
  int outer_iterations = 0;
  bool converged = false;
};

// Model-based variant: alternates synthetic rollouts from the fitted
// transition model with fitted Q iteration over real plus synthetic tuples,
// stopping once the greedy policy is stable on the real (s, a) pairs.
MbSplResult mb_spl(const TrainingSet& real_data, const RewardFn& reward_fn,
                   const OfflineDataset& transitions, std::shared_ptr<const FeatureMap> features,
                   const MbSplConfig& cfg);

}  // namespace spl
