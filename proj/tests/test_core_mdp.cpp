#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <map>

#include "spl/environments.hpp"

using namespace spl;

namespace {

// Deterministic two-state cycle: both actions swap the states.
TabularMDP two_state_cycle(double gamma) {
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  Eigen::MatrixXd p(2, 2);
  p << 0, 1, 1, 0;
  mdp.transition = {p};
  mdp.reward_mean = Eigen::MatrixXd::Zero(2, 1);
  mdp.reward_std = Eigen::MatrixXd::Zero(2, 1);
  mdp.gamma = gamma;
  mdp.initial_dist = Eigen::VectorXd::Constant(2, 0.5);
  mdp.validate();
  return mdp;
}

}  // namespace

TEST_CASE("grid codec round trips and rejects off-grid states") {
  StateCodec codec = StateCodec::grid(3);
  for (int i = 0; i < 9; ++i) CHECK(codec.to_index(codec.to_vec(i)) == i);
  CHECK(codec.to_index(Vec2(1, 2)) == 5);
  CHECK_THROWS_AS(codec.to_index(Vec2(3, 0)), std::out_of_range);
  CHECK_THROWS_AS(codec.to_index(Vec2(-0.6, 0)), std::out_of_range);
  // fractional coordinates snap to the nearest cell
  CHECK(codec.to_index(Vec2(0.4, 0)) == 0);
  CHECK(codec.to_index(Vec2(1.6, 2.4)) == 8);
}

TEST_CASE("empirical distribution: point masses and uniform pair") {
  OfflineDataset data;
  data.labeled.push_back({Vec2(0, 0), 1, 0.5, Vec2(0, 0)});
  StateCodec codec = StateCodec::grid(3);
  Eigen::MatrixXd d = empirical_distribution(data, DataSlice::Labeled, codec, 9, 5);
  CHECK(d(0, 1) == 1.0);
  CHECK(d.sum() == doctest::Approx(1.0));

  data.labeled.push_back({Vec2(1, 0), 0, 0.0, Vec2(0, 0)});
  d = empirical_distribution(data, DataSlice::Labeled, codec, 9, 5);
  CHECK(d(0, 1) == 0.5);
  CHECK(d(3, 0) == 0.5);

  CHECK_THROWS(empirical_distribution(data, DataSlice::Unlabeled, codec, 9, 5));
}

TEST_CASE("empirical distribution matches an independent recount on generated data") {
  GridEnv env;
  Policy behavior = epsilon_greedy_optimal(env, 0.1);
  OfflineDataset data = generate_offline_data(env, behavior, 60, 2, true, 123);
  REQUIRE(data.n_labeled() == 120);

  std::map<std::pair<int, int>, int> counts;
  for (const auto& t : data.labeled) ++counts[{env.codec().to_index(t.s), t.a}];

  Eigen::MatrixXd d = empirical_distribution(data, DataSlice::Labeled, env.codec(), 9, 5);
  for (int s = 0; s < 9; ++s)
    for (int a = 0; a < 5; ++a) {
      auto it = counts.find({s, a});
      double expect = it == counts.end() ? 0.0 : it->second / 120.0;
      CHECK(d(s, a) == doctest::Approx(expect).scale(1.0).epsilon(1e-15));
    }
}

TEST_CASE("discounted visitation: single pair, series oracle, normalization") {
  TabularMDP solo;
  solo.n_states = 1;
  solo.n_actions = 1;
  solo.transition = {Eigen::MatrixXd::Ones(1, 1)};
  solo.reward_mean = Eigen::MatrixXd::Zero(1, 1);
  solo.reward_std = Eigen::MatrixXd::Zero(1, 1);
  solo.gamma = 0.9;
  solo.initial_dist = Eigen::VectorXd::Ones(1);
  solo.validate();
  Policy pi = Policy::deterministic({0}, 1, solo.codec);
  CHECK(discounted_visitation(solo, pi)(0, 0) == doctest::Approx(1.0));

  TabularMDP cycle = two_state_cycle(0.5);
  Policy pc = Policy::deterministic({0, 0}, 1, cycle.codec);
  Eigen::MatrixXd d = discounted_visitation(cycle, pc);

  // truncated power series to t = 200
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd probe = cycle.initial_dist;
  double w = 1.0 - cycle.gamma;
  for (int t = 0; t <= 200; ++t) {
    occ += w * probe;
    probe = cycle.transition[0].transpose() * probe;
    w *= cycle.gamma;
  }
  CHECK(d(0, 0) == doctest::Approx(occ[0]).epsilon(1e-9));
  CHECK(d(1, 0) == doctest::Approx(occ[1]).epsilon(1e-9));
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-10));

  GridEnv env;
  Eigen::MatrixXd dg = discounted_visitation(env.mdp(), Policy::uniform_random_tabular(9, 5));
  CHECK(dg.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(dg.minCoeff() >= 0.0);
}

TEST_CASE("concentration coefficient basics") {
  Eigen::MatrixXd d(2, 1);
  d << 0.3, 0.7;
  auto same = concentration_coefficient(d, d);
  CHECK_FALSE(same.unbounded);
  CHECK(same.value == doctest::Approx(1.0));

  Eigen::MatrixXd zero(2, 1);
  zero << 0.0, 1.0;
  CHECK(concentration_coefficient(d, zero).unbounded);

  Eigen::MatrixXd skew(2, 1);
  skew << 0.5, 0.5;
  auto r = concentration_coefficient(d, skew);
  CHECK(r.value == doctest::Approx(1.4));
  CHECK(r.value >= 1.0);

  Eigen::MatrixXd wrong(3, 1);
  wrong << 0.2, 0.3, 0.5;
  CHECK_THROWS(concentration_coefficient(d, wrong));
}

TEST_CASE("policy-class concentration agrees with a per-pair occupancy oracle") {
  GridEnv env;
  const TabularMDP& mdp = env.mdp();

  Policy behavior = Policy::uniform_random_tabular(9, 5);
  OfflineDataset data = generate_offline_data(env, behavior, 400, 2, true, 7);
  Eigen::MatrixXd d_data = empirical_distribution(data, DataSlice::Labeled, mdp.codec, 9, 5);

  Concentration enumerated = policy_class_concentration(mdp, d_data);

  if (enumerated.unbounded) {
    // some pair is unreachable in the data; oracle must agree on the gap
    bool any_zero = (d_data.array() == 0.0).any();
    CHECK(any_zero);
    return;
  }
  CHECK_FALSE(enumerated.approximate);

  // Independent route: for each (s, a), the max occupancy over all policies
  // solves a small constrained control problem (action forced at s), computed
  // by value iteration with an indicator reward.
  double best = 0.0;
  for (int s = 0; s < 9; ++s) {
    for (int a = 0; a < 5; ++a) {
      if (d_data(s, a) == 0.0) continue;
      Eigen::VectorXd v = Eigen::VectorXd::Zero(9);
      for (int iter = 0; iter < 4000; ++iter) {
        Eigen::VectorXd nv(9);
        for (int x = 0; x < 9; ++x) {
          double bestq = -1e100;
          for (int b = 0; b < 5; ++b) {
            if (x == s && b != a) continue;
            double q = (x == s ? 1.0 : 0.0) + mdp.gamma * mdp.transition[b].row(x).dot(v);
            bestq = std::max(bestq, q);
          }
          nv[x] = bestq;
        }
        double diff = (nv - v).cwiseAbs().maxCoeff();
        v = nv;
        if (diff < 1e-13) break;
      }
      double occupancy = (1.0 - mdp.gamma) * mdp.initial_dist.dot(v);
      best = std::max(best, occupancy / d_data(s, a));
    }
  }
  CHECK(enumerated.value == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("semi-coverage report: union support dominates labeled support") {
  GridEnv env;
  OfflineDataset data;
  // labeled on 3 pairs, unlabeled on 12 others
  int placed = 0;
  for (int s = 0; s < 9 && placed < 15; ++s)
    for (int a = 0; a < 5 && placed < 15; ++a, ++placed) {
      Vec2 v = env.codec().to_vec(s);
      if (placed < 3)
        data.labeled.push_back({v, a, 1.0, v});
      else
        data.unlabeled.push_back({v, a, v});
    }

  SemiCoverageReport rep = check_semi_coverage(data, env.codec(), 9, 5);
  CHECK(rep.n_covered_labeled == 3);
  CHECK(rep.n_covered_union == 15);
  CHECK_FALSE(rep.union_full);
  for (int s = 0; s < 9; ++s)
    for (int a = 0; a < 5; ++a)
      if (rep.support_labeled(s, a) == 1) CHECK(rep.support_union(s, a) == 1);

  // generated data: support counts equal an independent recount
  OfflineDataset gen = generate_offline_data(env, Policy::uniform_random(5), 50, 2, true, 5);
  OfflineDataset genu = generate_offline_data(env, Policy::uniform_random(5), 80, 2, false, 6);
  gen.unlabeled = genu.unlabeled;
  gen.unlabeled_episodes = genu.unlabeled_episodes;
  SemiCoverageReport rep2 = check_semi_coverage(gen, env.codec(), 9, 5);

  std::map<std::pair<int, int>, int> seen;
  for (const auto& t : gen.labeled) seen[{env.codec().to_index(t.s), t.a}] = 1;
  CHECK(rep2.n_covered_labeled == static_cast<int>(seen.size()));
  for (const auto& t : gen.unlabeled) seen[{env.codec().to_index(t.s), t.a}] = 1;
  CHECK(rep2.n_covered_union == static_cast<int>(seen.size()));
  CHECK(rep2.union_full == (seen.size() == 45));
  CHECK_FALSE(rep2.summary().empty());
}

TEST_CASE("dataset csv round trip preserves tuples, slices, and episodes") {
  GridEnv env;
  OfflineDataset labeled = generate_offline_data(env, Policy::uniform_random(5), 3, 2, true, 11);
  OfflineDataset unlabeled = generate_offline_data(env, Policy::uniform_random(5), 2, 3, false, 12);
  OfflineDataset data = merged(std::move(labeled), std::move(unlabeled));

  const std::string path = "/tmp/spl_test_dataset.csv";
  data.save_csv(path);
  OfflineDataset back = OfflineDataset::load_csv(path);
  std::remove(path.c_str());

  REQUIRE(back.n_labeled() == data.n_labeled());
  REQUIRE(back.n_unlabeled() == data.n_unlabeled());
  for (long i = 0; i < data.n_labeled(); ++i) {
    CHECK(back.labeled[i].s == data.labeled[i].s);
    CHECK(back.labeled[i].a == data.labeled[i].a);
    CHECK(back.labeled[i].r == data.labeled[i].r);  // %.17g is lossless
    CHECK(back.labeled[i].s_next == data.labeled[i].s_next);
  }
  for (long i = 0; i < data.n_unlabeled(); ++i) {
    CHECK(back.unlabeled[i].s == data.unlabeled[i].s);
    CHECK(back.unlabeled[i].a == data.unlabeled[i].a);
  }
  REQUIRE(back.labeled_episodes.size() == data.labeled_episodes.size());
  REQUIRE(back.unlabeled_episodes.size() == data.unlabeled_episodes.size());
  for (std::size_t i = 0; i < data.labeled_episodes.size(); ++i) {
    CHECK(back.labeled_episodes[i].begin == data.labeled_episodes[i].begin);
    CHECK(back.labeled_episodes[i].end == data.labeled_episodes[i].end);
  }
}

TEST_CASE("tabular mdp validation rejects malformed tables") {
  TabularMDP mdp = two_state_cycle(0.5);
  TabularMDP bad = mdp;
  bad.transition[0](0, 0) = 0.5;  // row no longer sums to 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.initial_dist = Eigen::VectorXd::Constant(2, 0.7);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
