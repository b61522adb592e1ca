#pragma once

#include <memory>
#include <utility>

#include "spl/core_mdp.hpp"

namespace spl {

// Immutable simulator interface: all sampling flows through caller-owned
// generators, so the same seed reproduces the same trajectories bit for bit.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual int n_actions() const = 0;
  virtual Vec2 initial_state(Rng& rng) const = 0;
  // samples (reward, next state)
  virtual std::pair<double, Vec2> step(const Vec2& s, int a, Rng& rng) const = 0;
  virtual double r_max() const = 0;
  virtual double default_gamma() const = 0;
};

// 3x3 grid with actions {stay, +y, +x, -y, -x} and a rewarding corner at
// (0,0). Intended moves succeed with probability 0.9; the remaining 0.1 is
// spread uniformly over the L1 neighborhood of the current cell (itself
// included). The reward depends on the realized next state: N(10, 1) on
// entering the goal, N(-0.1, 10) elsewhere.
class GridEnv final : public Environment {
 public:
  static constexpr int kSide = 3;
  static constexpr int kStates = 9;
  static constexpr int kActions = 5;

  explicit GridEnv(Eigen::VectorXd initial_dist = Eigen::VectorXd());

  std::string name() const override { return "grid"; }
  int n_actions() const override { return kActions; }
  Vec2 initial_state(Rng& rng) const override;
  std::pair<double, Vec2> step(const Vec2& s, int a, Rng& rng) const override;
  double r_max() const override { return 10.0; }
  double default_gamma() const override { return 0.95; }

  const TabularMDP& mdp() const { return mdp_; }
  const StateCodec& codec() const { return mdp_.codec; }
  int goal_index() const { return 0; }

 private:
  TabularMDP mdp_;
};

// Two-dimensional linear system with actions {-1, 0, +1} (indices 0..2).
// Reward ~ N(5 a (s1 + s2), sigma_a) with sigma_0 = 0.8 and 0.1 otherwise;
// next state ~ N(a M s, 0.01 I). The optimal action follows sign(s1 + s2).
class LinearGaussianEnv final : public Environment {
 public:
  explicit LinearGaussianEnv(double r_max = 30.0);

  std::string name() const override { return "linear_gaussian"; }
  int n_actions() const override { return 3; }
  Vec2 initial_state(Rng& rng) const override;
  std::pair<double, Vec2> step(const Vec2& s, int a, Rng& rng) const override;
  double r_max() const override { return r_max_; }
  double default_gamma() const override { return 0.99; }

  double action_value(int a) const { return static_cast<double>(a - 1); }
  int optimal_action(const Vec2& s) const;
  double reward_mean(const Vec2& s, int a) const;
  double reward_sd(int a) const { return a == 1 ? 0.8 : 0.1; }
  const Eigen::Matrix2d& dynamics() const { return m_; }

 private:
  Eigen::Matrix2d m_;
  double r_max_;
};

// Simulator view of an explicit tabular model: categorical transitions and
// Gaussian rewards drawn from the declared tables.
class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(TabularMDP mdp);

  std::string name() const override { return "tabular"; }
  int n_actions() const override { return mdp_.n_actions; }
  Vec2 initial_state(Rng& rng) const override;
  std::pair<double, Vec2> step(const Vec2& s, int a, Rng& rng) const override;
  double r_max() const override;
  double default_gamma() const override { return mdp_.gamma; }

  const TabularMDP& mdp() const { return mdp_; }

 private:
  TabularMDP mdp_;
};

// Exact optimal policies: value iteration on the true tensor for the grid,
// the sign rule for the linear system.
Policy optimal_policy(const GridEnv& env);
Policy optimal_policy(const LinearGaussianEnv& env);
Policy epsilon_greedy_optimal(const GridEnv& env, double epsilon);

// Rolls out `n_trajectories` episodes of fixed horizon under a behavior
// policy. With record_rewards the tuples land in the labeled slice,
// otherwise rewards are discarded and the tuples land in the unlabeled one.
OfflineDataset generate_offline_data(const Environment& env, const Policy& behavior, int n_trajectories,
                                     int horizon, bool record_rewards, std::uint64_t seed);

// Same, but truncated to an exact tuple count (ceil(n/horizon) episodes).
OfflineDataset generate_tuples(const Environment& env, const Policy& behavior, int n_tuples, int horizon,
                               bool record_rewards, std::uint64_t seed);

// Pools a labeled slice and an unlabeled slice into one dataset.
OfflineDataset merged(OfflineDataset labeled_part, OfflineDataset unlabeled_part);

// Thins labeled tuples whose action disagrees with the optimal one: each is
// retained independently with probability 1 - fraction. Episode ranges are
// rebuilt over the survivors.
OfflineDataset remove_suboptimal_fraction(const OfflineDataset& data, const LinearGaussianEnv& env,
                                          double fraction, std::uint64_t seed);

}  // namespace spl
