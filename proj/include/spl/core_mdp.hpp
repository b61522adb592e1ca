#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spl/common.hpp"

namespace spl {

using Vec2 = Eigen::Vector2d;

// Bridges vector-valued states and discrete state indices for tabular work.
// The identity codec uses the convention state i <-> (i, 0).
struct StateCodec {
  std::function<int(const Vec2&)> to_index;
  std::function<Vec2(int)> to_vec;

  static StateCodec identity();
  static StateCodec grid(int side);  // (x, y) with x, y in {0..side-1}, index = x * side + y
};

struct LabeledTuple {
  Vec2 s;
  int a = 0;
  double r = 0.0;
  Vec2 s_next;
};

struct UnlabeledTuple {
  Vec2 s;
  int a = 0;
  Vec2 s_next;
};

struct EpisodeRange {
  int begin = 0;  // tuple index, half-open
  int end = 0;
};

// Offline data with a reward-labeled part and a reward-free part.
// Episode ranges index into the corresponding tuple vectors.
struct OfflineDataset {
  std::vector<LabeledTuple> labeled;
  std::vector<UnlabeledTuple> unlabeled;
  std::vector<EpisodeRange> labeled_episodes;
  std::vector<EpisodeRange> unlabeled_episodes;
  std::uint64_t seed = 0;

  long n_labeled() const { return static_cast<long>(labeled.size()); }
  long n_unlabeled() const { return static_cast<long>(unlabeled.size()); }
  long n_total() const { return n_labeled() + n_unlabeled(); }

  // One row per tuple: traj_id,t,s1,s2,a,r,s_next1,s_next2 (r empty when unlabeled).
  void save_csv(const std::string& path) const;
  static OfflineDataset load_csv(const std::string& path);
};

enum class DataSlice { Labeled, Unlabeled, Union };

// Finite MDP with Gaussian immediate rewards, transition[a](s, s') = P(s'|s,a).
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> transition;
  Eigen::MatrixXd reward_mean;  // n_states x n_actions
  Eigen::MatrixXd reward_std;
  double gamma = 0.95;
  Eigen::VectorXd initial_dist;
  StateCodec codec = StateCodec::identity();

  void validate() const;  // throws std::invalid_argument on malformed tables
};

// A policy always knows how to act on a state vector; tabular policies
// additionally expose conditional action probabilities for occupancy math.
struct Policy {
  Eigen::MatrixXd probs;  // n_states x n_actions, empty for continuous-only policies
  std::function<int(const Vec2&, Rng&)> act;

  bool has_probs() const { return probs.size() > 0; }

  static Policy deterministic(std::vector<int> action_of_state, int n_actions, const StateCodec& codec);
  static Policy epsilon_greedy(std::vector<int> greedy_action_of_state, int n_actions, double epsilon,
                               const StateCodec& codec);
  static Policy uniform_random(int n_actions);
  static Policy uniform_random_tabular(int n_states, int n_actions);
  static Policy from_function(std::function<int(const Vec2&)> choose, int n_actions);
};

// Empirical state-action frequency of the chosen slice; rows sum to 1 over
// all entries. Throws if the slice is empty.
Eigen::MatrixXd empirical_distribution(const OfflineDataset& data, DataSlice slice, const StateCodec& codec,
                                       int n_states, int n_actions);

// Normalized discounted state-action occupancy of a tabular policy,
// d(s,a) = (1-gamma) sum_t gamma^t P(S_t=s, A_t=a), by dense linear solve.
// `initial` defaults to the MDP's initial distribution when empty.
Eigen::MatrixXd discounted_visitation(const TabularMDP& mdp, const Policy& policy,
                                      const Eigen::VectorXd& initial = Eigen::VectorXd());

struct Concentration {
  double value = 0.0;
  bool unbounded = false;
  bool approximate = false;  // set when the policy sup was sampled, not enumerated
};

// sup over the numerator's support of numerator/denominator; unbounded when
// the numerator puts mass where the denominator has none.
Concentration concentration_coefficient(const Eigen::MatrixXd& numerator, const Eigen::MatrixXd& denominator);

// sup over policies of the occupancy ratio against a data distribution.
// Enumerates all deterministic policies when |A|^|S| <= enumeration_cap,
// otherwise samples n_samples random deterministic policies and flags the
// result as approximate.
Concentration policy_class_concentration(const TabularMDP& mdp, const Eigen::MatrixXd& data_dist,
                                         std::uint64_t seed = 0, double enumeration_cap = 1e7,
                                         int n_samples = 10000);

// Support audit of labeled / unlabeled / pooled slices. Pooling can only
// grow support, so pooled coverage never falls below the labeled one.
struct SemiCoverageReport {
  Eigen::ArrayXXi support_labeled;  // n_states x n_actions, 0/1
  Eigen::ArrayXXi support_unlabeled;
  Eigen::ArrayXXi support_union;
  int n_covered_labeled = 0;
  int n_covered_union = 0;
  bool union_full = false;

  std::string summary() const;
};

SemiCoverageReport check_semi_coverage(const OfflineDataset& data, const StateCodec& codec, int n_states,
                                       int n_actions);

}  // namespace spl
