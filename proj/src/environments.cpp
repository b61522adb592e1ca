#include "spl/environments.hpp"

#include <cmath>
#include <stdexcept>

#include "spl/policy_learning.hpp"

namespace spl {

namespace {

constexpr std::uint64_t kGenLabeledTag = 0xda7a1;
constexpr std::uint64_t kGenUnlabeledTag = 0xda7a0;
constexpr std::uint64_t kThinTag = 0xf11;

const int kDx[GridEnv::kActions] = {0, 0, 1, 0, -1};
const int kDy[GridEnv::kActions] = {0, 1, 0, -1, 0};

int sample_categorical(const Eigen::VectorXd& p, Rng& rng) {
  double u = draw_uniform(rng), acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

GridEnv::GridEnv(Eigen::VectorXd initial_dist) {
  mdp_.n_states = kStates;
  mdp_.n_actions = kActions;
  mdp_.gamma = default_gamma();
  mdp_.codec = StateCodec::grid(kSide);
  mdp_.initial_dist = initial_dist.size()
                          ? std::move(initial_dist)
                          : Eigen::VectorXd::Constant(kStates, 1.0 / static_cast<double>(kStates));

  auto clip = [](int v) { return std::min(kSide - 1, std::max(0, v)); };
  mdp_.transition.assign(kActions, Eigen::MatrixXd::Zero(kStates, kStates));
  for (int s = 0; s < kStates; ++s) {
    const int x = s / kSide, y = s % kSide;
    std::vector<int> hood;  // L1 ball of radius 1, clipped to the grid
    hood.push_back(s);
    if (x > 0) hood.push_back(s - kSide);
    if (x < kSide - 1) hood.push_back(s + kSide);
    if (y > 0) hood.push_back(s - 1);
    if (y < kSide - 1) hood.push_back(s + 1);
    for (int a = 0; a < kActions; ++a) {
      auto& T = mdp_.transition[a];
      T(s, clip(x + kDx[a]) * kSide + clip(y + kDy[a])) += 0.9;
      for (int n : hood) T(s, n) += 0.1 / static_cast<double>(hood.size());
    }
  }

  mdp_.reward_mean.resize(kStates, kActions);
  mdp_.reward_std.resize(kStates, kActions);
  for (int s = 0; s < kStates; ++s) {
    for (int a = 0; a < kActions; ++a) {
      double p_goal = mdp_.transition[a](s, goal_index());
      double m = p_goal * 10.0 + (1.0 - p_goal) * (-0.1);
      double second = p_goal * (1.0 + 100.0) + (1.0 - p_goal) * (10.0 + 0.01);
      mdp_.reward_mean(s, a) = m;
      mdp_.reward_std(s, a) = std::sqrt(second - m * m);
    }
  }
  mdp_.validate();
}

Vec2 GridEnv::initial_state(Rng& rng) const {
  return mdp_.codec.to_vec(sample_categorical(mdp_.initial_dist, rng));
}

std::pair<double, Vec2> GridEnv::step(const Vec2& s, int a, Rng& rng) const {
  if (a < 0 || a >= kActions) throw std::out_of_range("grid step: action index out of range");
  const int si = mdp_.codec.to_index(s);
  const int sn = sample_categorical(mdp_.transition[a].row(si).transpose(), rng);
  const double r = sn == goal_index() ? draw_normal(rng, 10.0, 1.0)
                                      : draw_normal(rng, -0.1, std::sqrt(10.0));
  return {r, mdp_.codec.to_vec(sn)};
}

LinearGaussianEnv::LinearGaussianEnv(double r_max) : r_max_(r_max) {
  m_ << -0.77, 0.23, 0.23, 0.77;
}

Vec2 LinearGaussianEnv::initial_state(Rng& rng) const {
  return Vec2(draw_normal(rng, 0.0, 1.0), draw_normal(rng, 0.0, 1.0));
}

double LinearGaussianEnv::reward_mean(const Vec2& s, int a) const {
  return 5.0 * action_value(a) * (s[0] + s[1]);
}

int LinearGaussianEnv::optimal_action(const Vec2& s) const {
  double z = s[0] + s[1];
  if (z > 0.0) return 2;
  if (z < 0.0) return 0;
  return 1;
}

std::pair<double, Vec2> LinearGaussianEnv::step(const Vec2& s, int a, Rng& rng) const {
  if (a < 0 || a >= 3) throw std::out_of_range("linear step: action index out of range");
  const double r = draw_normal(rng, reward_mean(s, a), reward_sd(a));
  const Vec2 mean = action_value(a) * (m_ * s);
  return {r, Vec2(draw_normal(rng, mean[0], 0.1), draw_normal(rng, mean[1], 0.1))};
}

TabularEnv::TabularEnv(TabularMDP mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

Vec2 TabularEnv::initial_state(Rng& rng) const {
  return mdp_.codec.to_vec(sample_categorical(mdp_.initial_dist, rng));
}

std::pair<double, Vec2> TabularEnv::step(const Vec2& s, int a, Rng& rng) const {
  if (a < 0 || a >= mdp_.n_actions) throw std::out_of_range("tabular step: action index out of range");
  const int si = mdp_.codec.to_index(s);
  const int sn = sample_categorical(mdp_.transition[a].row(si).transpose(), rng);
  const double r = draw_normal(rng, mdp_.reward_mean(si, a), mdp_.reward_std(si, a));
  return {r, mdp_.codec.to_vec(sn)};
}

double TabularEnv::r_max() const { return mdp_.reward_mean.array().abs().maxCoeff(); }

namespace {

std::vector<int> grid_optimal_actions(const GridEnv& env) {
  QFunction q = value_iteration(env.mdp(), env.mdp().reward_mean, 1e-12);
  std::vector<int> table(GridEnv::kStates);
  for (int s = 0; s < GridEnv::kStates; ++s) table[s] = q.greedy(env.codec().to_vec(s));
  return table;
}

}  // namespace

Policy optimal_policy(const GridEnv& env) {
  return Policy::deterministic(grid_optimal_actions(env), GridEnv::kActions, env.codec());
}

Policy epsilon_greedy_optimal(const GridEnv& env, double epsilon) {
  return Policy::epsilon_greedy(grid_optimal_actions(env), GridEnv::kActions, epsilon, env.codec());
}

Policy optimal_policy(const LinearGaussianEnv& env) {
  return Policy::from_function([&env](const Vec2& s) { return env.optimal_action(s); },
                               env.n_actions());
}

OfflineDataset generate_offline_data(const Environment& env, const Policy& behavior, int n_trajectories,
                                     int horizon, bool record_rewards, std::uint64_t seed) {
  if (n_trajectories < 0 || horizon <= 0)
    throw std::invalid_argument("generate_offline_data: bad trajectory shape");
  Rng rng(seed_stream(seed, record_rewards ? kGenLabeledTag : kGenUnlabeledTag));
  OfflineDataset d;
  d.seed = seed;
  for (int i = 0; i < n_trajectories; ++i) {
    int begin = record_rewards ? static_cast<int>(d.labeled.size())
                               : static_cast<int>(d.unlabeled.size());
    Vec2 s = env.initial_state(rng);
    for (int t = 0; t < horizon; ++t) {
      int a = behavior.act(s, rng);
      auto [r, sn] = env.step(s, a, rng);
      if (record_rewards)
        d.labeled.push_back({s, a, r, sn});
      else
        d.unlabeled.push_back({s, a, sn});
      s = sn;
    }
    if (record_rewards)
      d.labeled_episodes.push_back({begin, static_cast<int>(d.labeled.size())});
    else
      d.unlabeled_episodes.push_back({begin, static_cast<int>(d.unlabeled.size())});
  }
  return d;
}

OfflineDataset generate_tuples(const Environment& env, const Policy& behavior, int n_tuples, int horizon,
                               bool record_rewards, std::uint64_t seed) {
  if (n_tuples < 0) throw std::invalid_argument("generate_tuples: negative tuple count");
  const int n_traj = (n_tuples + horizon - 1) / horizon;
  OfflineDataset d = generate_offline_data(env, behavior, n_traj, horizon, record_rewards, seed);
  auto truncate = [n_tuples](auto& tuples, std::vector<EpisodeRange>& eps) {
    if (static_cast<int>(tuples.size()) <= n_tuples) return;
    tuples.resize(static_cast<std::size_t>(n_tuples));
    while (!eps.empty() && eps.back().begin >= n_tuples) eps.pop_back();
    if (!eps.empty()) eps.back().end = std::min(eps.back().end, n_tuples);
  };
  truncate(d.labeled, d.labeled_episodes);
  truncate(d.unlabeled, d.unlabeled_episodes);
  return d;
}

OfflineDataset merged(OfflineDataset labeled_part, OfflineDataset unlabeled_part) {
  OfflineDataset d = std::move(labeled_part);
  d.unlabeled = std::move(unlabeled_part.unlabeled);
  d.unlabeled_episodes = std::move(unlabeled_part.unlabeled_episodes);
  return d;
}

OfflineDataset remove_suboptimal_fraction(const OfflineDataset& data, const LinearGaussianEnv& env,
                                          double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("remove_suboptimal_fraction: fraction must lie in [0, 1]");
  Rng rng(seed_stream(seed, kThinTag));
  OfflineDataset out;
  out.seed = data.seed;
  out.unlabeled = data.unlabeled;
  out.unlabeled_episodes = data.unlabeled_episodes;
  for (const auto& ep : data.labeled_episodes) {
    int begin = static_cast<int>(out.labeled.size());
    for (int i = ep.begin; i < ep.end; ++i) {
      const auto& u = data.labeled[static_cast<std::size_t>(i)];
      bool optimal = u.a == env.optimal_action(u.s);
      if (optimal || draw_uniform(rng) >= fraction) out.labeled.push_back(u);
    }
    int end = static_cast<int>(out.labeled.size());
    if (end > begin) out.labeled_episodes.push_back({begin, end});
  }
  return out;
}

}  // namespace spl
