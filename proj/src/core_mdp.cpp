#include "spl/core_mdp.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spl {

namespace {

int checked_round(double v, int lo, int hi, const char* what) {
  int i = static_cast<int>(std::llround(v));
  if (i < lo || i > hi) throw std::out_of_range(std::string(what) + ": coordinate out of range");
  return i;
}

constexpr double kZeroTol = 1e-14;

}  // namespace

StateCodec StateCodec::identity() {
  StateCodec c;
  c.to_index = [](const Vec2& v) {
    return checked_round(v[0], 0, std::numeric_limits<int>::max(), "identity codec");
  };
  c.to_vec = [](int i) { return Vec2(static_cast<double>(i), 0.0); };
  return c;
}

StateCodec StateCodec::grid(int side) {
  StateCodec c;
  c.to_index = [side](const Vec2& v) {
    int x = checked_round(v[0], 0, side - 1, "grid codec");
    int y = checked_round(v[1], 0, side - 1, "grid codec");
    return x * side + y;
  };
  c.to_vec = [side](int i) {
    return Vec2(static_cast<double>(i / side), static_cast<double>(i % side));
  };
  return c;
}

void OfflineDataset::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "traj_id,t,s1,s2,a,r,s_next1,s_next2\n";
  int traj = 0;
  auto emit = [&](const Vec2& s, int a, const double* r, const Vec2& sn, int t) {
    out << traj << ',' << t << ',' << fmt_double(s[0]) << ',' << fmt_double(s[1]) << ',' << a << ','
        << (r ? fmt_double(*r) : "") << ',' << fmt_double(sn[0]) << ',' << fmt_double(sn[1]) << '\n';
  };
  for (const auto& ep : labeled_episodes) {
    for (int i = ep.begin; i < ep.end; ++i) {
      const auto& u = labeled[i];
      emit(u.s, u.a, &u.r, u.s_next, i - ep.begin);
    }
    ++traj;
  }
  for (const auto& ep : unlabeled_episodes) {
    for (int i = ep.begin; i < ep.end; ++i) {
      const auto& u = unlabeled[i];
      emit(u.s, u.a, nullptr, u.s_next, i - ep.begin);
    }
    ++traj;
  }
}

OfflineDataset OfflineDataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  OfflineDataset d;
  std::string line;
  std::getline(in, line);  // header
  int prev_traj = -1;
  bool prev_labeled = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    while (f.size() < 8) f.emplace_back();
    int traj = std::stoi(f[0]);
    Vec2 s(std::stod(f[2]), std::stod(f[3]));
    int a = std::stoi(f[4]);
    Vec2 sn(std::stod(f[6]), std::stod(f[7]));
    bool lab = !f[5].empty();
    auto& eps = lab ? d.labeled_episodes : d.unlabeled_episodes;
    int pos = lab ? static_cast<int>(d.labeled.size()) : static_cast<int>(d.unlabeled.size());
    if (traj != prev_traj || lab != prev_labeled || eps.empty()) {
      eps.push_back({pos, pos});
      prev_traj = traj;
      prev_labeled = lab;
    }
    if (lab)
      d.labeled.push_back({s, a, std::stod(f[5]), sn});
    else
      d.unlabeled.push_back({s, a, sn});
    eps.back().end = pos + 1;
  }
  return d;
}

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("mdp: empty state or action space");
  if (static_cast<int>(transition.size()) != n_actions)
    throw std::invalid_argument("mdp: need one transition matrix per action");
  for (const auto& T : transition) {
    if (T.rows() != n_states || T.cols() != n_states)
      throw std::invalid_argument("mdp: transition matrix has wrong shape");
    if ((T.array() < -kZeroTol).any()) throw std::invalid_argument("mdp: negative transition probability");
    for (int s = 0; s < n_states; ++s)
      if (std::abs(T.row(s).sum() - 1.0) > 1e-9)
        throw std::invalid_argument("mdp: transition row does not sum to 1");
  }
  if (reward_mean.rows() != n_states || reward_mean.cols() != n_actions ||
      reward_std.rows() != n_states || reward_std.cols() != n_actions)
    throw std::invalid_argument("mdp: reward tables have wrong shape");
  if (initial_dist.size() != n_states || std::abs(initial_dist.sum() - 1.0) > 1e-9 ||
      (initial_dist.array() < -kZeroTol).any())
    throw std::invalid_argument("mdp: initial distribution invalid");
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("mdp: gamma must lie in [0, 1)");
}

namespace {

Eigen::MatrixXd validated_probs(const Eigen::MatrixXd& p) {
  for (int s = 0; s < p.rows(); ++s)
    if (std::abs(p.row(s).sum() - 1.0) > 1e-9 || (p.row(s).array() < 0).any())
      throw std::invalid_argument("policy: action probabilities must be a distribution per state");
  return p;
}

}  // namespace

Policy Policy::deterministic(std::vector<int> action_of_state, int n_actions, const StateCodec& codec) {
  const int n_states = static_cast<int>(action_of_state.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    if (action_of_state[s] < 0 || action_of_state[s] >= n_actions)
      throw std::invalid_argument("policy: action index out of range");
    p(s, action_of_state[s]) = 1.0;
  }
  Policy pol;
  pol.probs = validated_probs(p);
  pol.act = [table = std::move(action_of_state), codec](const Vec2& s, Rng&) {
    return table[static_cast<std::size_t>(codec.to_index(s))];
  };
  return pol;
}

Policy Policy::epsilon_greedy(std::vector<int> greedy_action_of_state, int n_actions, double epsilon,
                              const StateCodec& codec) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("policy: epsilon must lie in [0, 1]");
  const int n_states = static_cast<int>(greedy_action_of_state.size());
  Eigen::MatrixXd p =
      Eigen::MatrixXd::Constant(n_states, n_actions, epsilon / static_cast<double>(n_actions));
  for (int s = 0; s < n_states; ++s) p(s, greedy_action_of_state[s]) += 1.0 - epsilon;
  Policy pol;
  pol.probs = validated_probs(p);
  pol.act = [table = std::move(greedy_action_of_state), codec, epsilon, n_actions](const Vec2& s,
                                                                                   Rng& rng) {
    if (draw_uniform(rng) < epsilon) return draw_index(rng, n_actions);
    return table[static_cast<std::size_t>(codec.to_index(s))];
  };
  return pol;
}

Policy Policy::uniform_random(int n_actions) {
  Policy pol;
  pol.act = [n_actions](const Vec2&, Rng& rng) { return draw_index(rng, n_actions); };
  return pol;
}

Policy Policy::uniform_random_tabular(int n_states, int n_actions) {
  Policy pol = uniform_random(n_actions);
  pol.probs = Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / static_cast<double>(n_actions));
  return pol;
}

Policy Policy::from_function(std::function<int(const Vec2&)> choose, int n_actions) {
  (void)n_actions;
  Policy pol;
  pol.act = [f = std::move(choose)](const Vec2& s, Rng&) { return f(s); };
  return pol;
}

Eigen::MatrixXd empirical_distribution(const OfflineDataset& data, DataSlice slice, const StateCodec& codec,
                                       int n_states, int n_actions) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_states, n_actions);
  long n = 0;
  auto add = [&](const Vec2& s, int a) {
    counts(codec.to_index(s), a) += 1.0;
    ++n;
  };
  if (slice != DataSlice::Unlabeled)
    for (const auto& u : data.labeled) add(u.s, u.a);
  if (slice != DataSlice::Labeled)
    for (const auto& u : data.unlabeled) add(u.s, u.a);
  if (n == 0) throw std::invalid_argument("empirical_distribution: slice is empty");
  return counts / static_cast<double>(n);
}

Eigen::MatrixXd discounted_visitation(const TabularMDP& mdp, const Policy& policy,
                                      const Eigen::VectorXd& initial) {
  if (!policy.has_probs())
    throw std::invalid_argument("discounted_visitation: policy lacks tabular action probabilities");
  if (policy.probs.rows() != mdp.n_states || policy.probs.cols() != mdp.n_actions)
    throw std::invalid_argument("discounted_visitation: policy table shape mismatch");
  Eigen::VectorXd rho = initial.size() ? initial : mdp.initial_dist;
  if (rho.size() != mdp.n_states)
    throw std::invalid_argument("discounted_visitation: initial distribution shape mismatch");

  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    p_pi += policy.probs.col(a).asDiagonal() * mdp.transition[a];

  Eigen::MatrixXd A =
      Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p_pi.transpose();
  Eigen::VectorXd nu = A.partialPivLu().solve((1.0 - mdp.gamma) * rho);

  Eigen::MatrixXd d = nu.asDiagonal() * policy.probs;
  d = (d.array().abs() < kZeroTol).select(0.0, d);
  return d;
}

Concentration concentration_coefficient(const Eigen::MatrixXd& numerator,
                                        const Eigen::MatrixXd& denominator) {
  if (numerator.rows() != denominator.rows() || numerator.cols() != denominator.cols())
    throw std::invalid_argument("concentration_coefficient: shape mismatch");
  Concentration c;
  for (int s = 0; s < numerator.rows(); ++s) {
    for (int a = 0; a < numerator.cols(); ++a) {
      double num = numerator(s, a), den = denominator(s, a);
      if (num <= kZeroTol) continue;
      if (den <= kZeroTol) {
        c.unbounded = true;
        c.value = std::numeric_limits<double>::infinity();
        return c;
      }
      c.value = std::max(c.value, num / den);
    }
  }
  return c;
}

namespace {

// Occupancy ratio of one deterministic policy given a reusable workspace.
struct PolicyEvaluator {
  const TabularMDP& mdp;
  const Eigen::MatrixXd& den;
  Eigen::MatrixXd A;
  Eigen::VectorXd rhs, nu;

  explicit PolicyEvaluator(const TabularMDP& m, const Eigen::MatrixXd& d)
      : mdp(m), den(d), A(m.n_states, m.n_states), rhs((1.0 - m.gamma) * m.initial_dist),
        nu(m.n_states) {}

  // returns the max ratio; infinity encodes an unbounded pair
  double ratio(const std::vector<int>& pi) {
    A.setIdentity();
    for (int s = 0; s < mdp.n_states; ++s)
      A.col(s) -= mdp.gamma * mdp.transition[pi[s]].row(s).transpose();
    nu = A.partialPivLu().solve(rhs);
    double worst = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double num = nu[s];
      if (num <= kZeroTol) continue;
      double d = den(s, pi[s]);
      if (d <= kZeroTol) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, num / d);
    }
    return worst;
  }
};

}  // namespace

Concentration policy_class_concentration(const TabularMDP& mdp, const Eigen::MatrixXd& data_dist,
                                         std::uint64_t seed, double enumeration_cap, int n_samples) {
  mdp.validate();
  if (data_dist.rows() != mdp.n_states || data_dist.cols() != mdp.n_actions)
    throw std::invalid_argument("policy_class_concentration: data distribution shape mismatch");

  PolicyEvaluator eval(mdp, data_dist);
  Concentration c;
  const double n_policies =
      std::pow(static_cast<double>(mdp.n_actions), static_cast<double>(mdp.n_states));

  std::vector<int> pi(mdp.n_states, 0);
  if (n_policies <= enumeration_cap) {
    while (true) {
      double r = eval.ratio(pi);
      if (std::isinf(r)) return {r, true, false};
      c.value = std::max(c.value, r);
      int k = 0;  // odometer increment
      while (k < mdp.n_states && ++pi[k] == mdp.n_actions) pi[k++] = 0;
      if (k == mdp.n_states) break;
    }
    return c;
  }

  Rng rng(seed_stream(seed, 0xb0d));
  c.approximate = true;
  for (int i = 0; i < n_samples; ++i) {
    for (auto& a : pi) a = draw_index(rng, mdp.n_actions);
    double r = eval.ratio(pi);
    if (std::isinf(r)) return {r, true, true};
    c.value = std::max(c.value, r);
  }
  return c;
}

SemiCoverageReport check_semi_coverage(const OfflineDataset& data, const StateCodec& codec, int n_states,
                                       int n_actions) {
  SemiCoverageReport rep;
  rep.support_labeled = Eigen::ArrayXXi::Zero(n_states, n_actions);
  rep.support_unlabeled = Eigen::ArrayXXi::Zero(n_states, n_actions);
  for (const auto& u : data.labeled) rep.support_labeled(codec.to_index(u.s), u.a) = 1;
  for (const auto& u : data.unlabeled) rep.support_unlabeled(codec.to_index(u.s), u.a) = 1;
  rep.support_union = (rep.support_labeled + rep.support_unlabeled).min(1);
  rep.n_covered_labeled = rep.support_labeled.sum();
  rep.n_covered_union = rep.support_union.sum();
  rep.union_full = rep.n_covered_union == n_states * n_actions;
  return rep;
}

std::string SemiCoverageReport::summary() const {
  const long total = support_labeled.size();
  std::ostringstream os;
  os << "state-action support: labeled " << n_covered_labeled << "/" << total << ", pooled "
     << n_covered_union << "/" << total << (union_full ? " (full)" : " (partial)");
  return os.str();
}

}  // namespace spl
