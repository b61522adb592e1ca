#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "spl/environments.hpp"
#include "spl/policy_learning.hpp"

using namespace spl;

namespace {

int l1_to_goal(const Vec2& s) { return static_cast<int>(std::abs(s.x()) + std::abs(s.y())); }

}  // namespace

TEST_CASE("grid transition tensor: row sums, support, and the 0.9 success mass") {
  GridEnv env;
  const TabularMDP& mdp = env.mdp();
  REQUIRE(mdp.n_states == 9);
  REQUIRE(mdp.n_actions == 5);

  for (int a = 0; a < 5; ++a)
    for (int s = 0; s < 9; ++s) {
      CHECK(mdp.transition[a].row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(mdp.transition[a].row(s).minCoeff() >= 0.0);
    }

  // from (1,0), action (-1,0): intended cell is the goal, which is also in the
  // L1 neighborhood {(1,0),(0,0),(2,0),(1,1)}, so it gets 0.9 + 0.1/4
  int s10 = env.codec().to_index(Vec2(1, 0));
  int a_left = 4;
  CHECK(mdp.transition[a_left](s10, env.goal_index()) == doctest::Approx(0.9 + 0.1 / 4));

  // support stays inside neighborhood plus the intended cell
  for (int a = 0; a < 5; ++a)
    for (int s = 0; s < 9; ++s) {
      Vec2 from = env.codec().to_vec(s);
      for (int t = 0; t < 9; ++t) {
        if (mdp.transition[a](s, t) == 0.0) continue;
        Vec2 to = env.codec().to_vec(t);
        int dist = static_cast<int>((from - to).cwiseAbs().sum());
        bool in_neighborhood = dist <= 1;
        double ix = std::clamp(from.x() + (a == 2 ? 1.0 : a == 4 ? -1.0 : 0.0), 0.0, 2.0);
        double iy = std::clamp(from.y() + (a == 1 ? 1.0 : a == 3 ? -1.0 : 0.0), 0.0, 2.0);
        bool intended = to.x() == ix && to.y() == iy;
        CHECK((in_neighborhood || intended));
      }
    }
}

TEST_CASE("grid step frequencies match the tensor within 0.01 over 1e6 samples") {
  GridEnv env;
  const TabularMDP& mdp = env.mdp();
  Rng rng(2024);
  for (auto [sx, sy, a] : {std::tuple{1, 0, 4}, std::tuple{2, 2, 0}, std::tuple{1, 1, 2}}) {
    Vec2 s(sx, sy);
    int s_idx = env.codec().to_index(s);
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(9);
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      auto [r, next] = env.step(s, a, rng);
      freq[env.codec().to_index(next)] += 1.0;
    }
    freq /= n;
    for (int t = 0; t < 9; ++t)
      CHECK(freq[t] == doctest::Approx(mdp.transition[a](s_idx, t)).scale(1.0).epsilon(0.01));
  }
}

TEST_CASE("grid reward is selected by the realized next state") {
  GridEnv env;
  Rng rng(77);
  Vec2 s(1, 0);
  int a = 4;  // moves onto the goal with high probability
  double sum_goal = 0.0, sum_other = 0.0;
  long n_goal = 0, n_other = 0;
  for (int i = 0; i < 200000; ++i) {
    auto [r, next] = env.step(s, a, rng);
    if (env.codec().to_index(next) == env.goal_index()) {
      sum_goal += r;
      ++n_goal;
    } else {
      sum_other += r;
      ++n_other;
    }
  }
  REQUIRE(n_goal > 1000);
  REQUIRE(n_other > 1000);
  CHECK(sum_goal / n_goal == doctest::Approx(10.0).epsilon(0.02));
  CHECK(sum_other / n_other == doctest::Approx(-0.1).scale(1.0).epsilon(0.1));

  // mixture mean table agrees with simulation
  double p_goal = env.mdp().transition[a](env.codec().to_index(s), env.goal_index());
  double expect = p_goal * 10.0 + (1.0 - p_goal) * -0.1;
  CHECK(env.mdp().reward_mean(env.codec().to_index(s), a) == doctest::Approx(expect).epsilon(1e-12));
  CHECK((sum_goal + sum_other) / (n_goal + n_other) == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("grid optimal policy moves toward the goal; myopic variant maximizes immediate reward") {
  GridEnv env;
  Policy opt = optimal_policy(env);
  Rng rng(1);
  CHECK(opt.act(Vec2(1, 0), rng) == 4);
  CHECK(opt.act(Vec2(0, 1), rng) == 3);

  // every greedy action weakly reduces L1 distance to (0,0) in intent
  for (int s = 0; s < 9; ++s) {
    Vec2 from = env.codec().to_vec(s);
    if (env.codec().to_index(from) == env.goal_index()) continue;
    int a = opt.act(from, rng);
    double ix = std::clamp(from.x() + (a == 2 ? 1.0 : a == 4 ? -1.0 : 0.0), 0.0, 2.0);
    double iy = std::clamp(from.y() + (a == 1 ? 1.0 : a == 3 ? -1.0 : 0.0), 0.0, 2.0);
    CHECK(l1_to_goal(Vec2(ix, iy)) < l1_to_goal(from));
  }

  // gamma = 0 variant: argmax of expected immediate reward
  TabularMDP myopic = env.mdp();
  myopic.gamma = 0.0;
  QFunction q = value_iteration(myopic, myopic.reward_mean, 1e-12);
  for (int s = 0; s < 9; ++s) {
    int a = q.greedy(env.codec().to_vec(s));
    double best = myopic.reward_mean.row(s).maxCoeff();
    CHECK(myopic.reward_mean(s, a) == doctest::Approx(best));
  }
}

TEST_CASE("linear gaussian step statistics") {
  LinearGaussianEnv env;
  CHECK(env.reward_mean(Vec2(1, 1), 2) == doctest::Approx(10.0));
  CHECK(env.reward_sd(1) == 0.8);
  CHECK(env.reward_sd(0) == 0.1);

  Rng rng(5);
  Vec2 s(0.5, -1.5);
  for (int a : {0, 1, 2}) {
    double sum = 0.0;
    Vec2 next_sum = Vec2::Zero();
    Vec2 next_sq = Vec2::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      auto [r, next] = env.step(s, a, rng);
      sum += r;
      next_sum += next;
      next_sq += next.cwiseProduct(next);
    }
    CHECK(sum / n == doctest::Approx(env.reward_mean(s, a)).scale(1.0).epsilon(0.02));
    Vec2 mean = next_sum / n;
    Vec2 expect = env.action_value(a) * env.dynamics() * s;
    CHECK(mean.x() == doctest::Approx(expect.x()).scale(1.0).epsilon(0.01));
    CHECK(mean.y() == doctest::Approx(expect.y()).scale(1.0).epsilon(0.01));
    Vec2 var = next_sq / n - mean.cwiseProduct(mean);
    CHECK(var.x() == doctest::Approx(0.01).epsilon(0.1));
    CHECK(var.y() == doctest::Approx(0.01).epsilon(0.1));
  }

  CHECK_THROWS(env.step(s, 3, rng));

  Policy opt = optimal_policy(env);
  Rng r2(3);
  CHECK(opt.act(Vec2(1, 1), r2) == 2);
  CHECK(opt.act(Vec2(-2, 1), r2) == 0);
  CHECK(opt.act(Vec2(1, -1), r2) == 1);
}

TEST_CASE("offline data generation: counts, slices, determinism") {
  LinearGaussianEnv env;
  Policy behavior = Policy::uniform_random(3);
  OfflineDataset a = generate_offline_data(env, behavior, 4, 30, true, 99);
  CHECK(a.n_labeled() == 120);
  CHECK(a.n_unlabeled() == 0);
  CHECK(a.labeled_episodes.size() == 4);
  for (const auto& ep : a.labeled_episodes) CHECK(ep.end - ep.begin == 30);

  OfflineDataset b = generate_offline_data(env, behavior, 4, 30, true, 99);
  REQUIRE(b.n_labeled() == a.n_labeled());
  for (long i = 0; i < a.n_labeled(); ++i) {
    CHECK(a.labeled[i].s == b.labeled[i].s);
    CHECK(a.labeled[i].r == b.labeled[i].r);
  }

  OfflineDataset u = generate_offline_data(env, behavior, 2, 5, false, 99);
  CHECK(u.n_labeled() == 0);
  CHECK(u.n_unlabeled() == 10);

  OfflineDataset t = generate_tuples(env, behavior, 7, 3, true, 42);
  CHECK(t.n_labeled() == 7);
  CHECK(t.labeled_episodes.size() == 3);
  CHECK(t.labeled_episodes.back().end - t.labeled_episodes.back().begin == 1);
}

TEST_CASE("epsilon-greedy with epsilon 1 acts uniformly") {
  GridEnv env;
  Policy p = epsilon_greedy_optimal(env, 1.0);
  Rng rng(8);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(5);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[p.act(Vec2(1, 1), rng)] += 1.0;
  for (int a = 0; a < 5; ++a) CHECK(freq[a] / n == doctest::Approx(0.2).epsilon(0.05));
  CHECK(p.probs.row(4).sum() == doctest::Approx(1.0));
}

TEST_CASE("suboptimal-action thinning") {
  LinearGaussianEnv env;
  OfflineDataset data;
  // 1000 suboptimal tuples (action 0 where +1 is optimal) and 50 optimal ones
  for (int i = 0; i < 1000; ++i) data.labeled.push_back({Vec2(1, 1), 0, 0.0, Vec2(0, 0)});
  for (int i = 0; i < 50; ++i) data.labeled.push_back({Vec2(1, 1), 2, 0.0, Vec2(0, 0)});
  data.labeled_episodes.push_back({0, 1050});

  OfflineDataset none = remove_suboptimal_fraction(data, env, 0.0, 3);
  CHECK(none.n_labeled() == 1050);

  OfflineDataset all = remove_suboptimal_fraction(data, env, 1.0, 3);
  CHECK(all.n_labeled() == 50);
  for (const auto& t : all.labeled) CHECK(t.a == 2);

  OfflineDataset part = remove_suboptimal_fraction(data, env, 0.8, 3);
  long sub = 0;
  for (const auto& t : part.labeled) sub += t.a == 0 ? 1 : 0;
  CHECK(sub >= 200 - 38);  // 3 sigma of Binomial(1000, 0.2)
  CHECK(sub <= 200 + 38);
  long opt = part.n_labeled() - sub;
  CHECK(opt == 50);
}
