// Acceptance gate: one line per criterion, nonzero exit iff a gating
// criterion fails. The transition-penalty comparison is reported but soft.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "spl/common.hpp"
#include "spl/core_mdp.hpp"
#include "spl/environments.hpp"
#include "spl/evaluation.hpp"
#include "spl/experiments.hpp"
#include "spl/policy_learning.hpp"
#include "spl/reward_uq.hpp"

using namespace spl;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

fs::path work_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "spl-acceptance" / name;
  fs::remove_all(p);
  return p;
}

std::vector<ResultRow> run_preset(const std::string& preset, const std::string& dir_name,
                                  const std::function<void(ExperimentConfig&)>& tweak,
                                  RunOutputs* outputs = nullptr) {
  ExperimentConfig cfg = ExperimentConfig::defaults(preset);
  cfg.seed = kSeed;
  if (tweak) tweak(cfg);
  RunOutputs out = run_experiment(cfg, work_dir(dir_name).string());
  if (outputs) *outputs = out;
  return read_results_csv(out.results_path);
}

struct Stat {
  double mean = 0.0;
  double se = 0.0;
  long n = 0;
};

Stat stat_of(const std::vector<ResultRow>& rows, const std::string& method,
             const std::string& metric, const std::function<bool(const ResultRow&)>& pred) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.method == method && r.metric == metric && pred(r)) v.push_back(r.value);
  return {mean_of(v), stderr_of(v), static_cast<long>(v.size())};
}

double pooled_se(const Stat& a, const Stat& b) { return std::sqrt(a.se * a.se + b.se * b.se); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, ...) {
  char buf[512];
  va_list args;
  va_start(args, spec);
  std::vsnprintf(buf, sizeof(buf), spec, args);
  va_end(args);
  return buf;
}

// ---- criterion implementations ----

Outcome grid_ratio_ordering() {
  auto rows = run_preset("fig1b-ratio", "c1", nullptr);
  const std::vector<long> unlabeled = {30, 60, 120, 150};
  std::vector<double> oracle_gap, ratios = {0.25, 0.5, 1.0, 1.25};
  bool ordered = true;
  Stat spl_last, pl_last;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    long nu = unlabeled[i];
    auto at = [nu](const ResultRow& r) { return r.n_unlabeled == nu; };
    Stat pl = stat_of(rows, "PL", "return", at);
    Stat spl = stat_of(rows, "SPL", "return", at);
    Stat oracle = stat_of(rows, "Oracle", "return", at);
    if (pl.n != 20 || spl.n != 20 || oracle.n != 20)
      return {false, fmt("missing replications at n_unlabeled=%ld", nu)};
    if (nu >= 120) ordered = ordered && oracle.mean >= spl.mean && spl.mean >= pl.mean;
    oracle_gap.push_back(oracle.mean - spl.mean);
    if (nu == 150) {
      spl_last = spl;
      pl_last = pl;
    }
  }
  const double margin = spl_last.mean - pl_last.mean;
  const double need = pooled_se(spl_last, pl_last);
  const double rho = spearman(ratios, oracle_gap);
  bool pass = ordered && margin >= need && rho <= 0.0;
  return {pass, fmt("ordering=%s, spl-pl@1.25=%.3f (need %.3f), oracle-gap spearman=%.2f",
                    ordered ? "ok" : "violated", margin, need, rho)};
}

Outcome grid_epsilon_gap() {
  auto rows = run_preset("fig1b-epsilon", "c2",
                         [](ExperimentConfig& c) { c.epsilons = {0.1, 0.9}; });
  auto gap = [&](double eps) {
    auto at = [eps](const ResultRow& r) { return std::abs(r.epsilon - eps) < 1e-12; };
    return stat_of(rows, "SPL", "return", at).mean - stat_of(rows, "PL", "return", at).mean;
  };
  const double lo = gap(0.1), hi = gap(0.9);
  return {lo > hi, fmt("spl-pl gap: %.3f at eps=0.1 vs %.3f at eps=0.9", lo, hi)};
}

Outcome linear_regret_ordering() {
  auto rows = run_preset("fig2b", "c3", nullptr);
  const std::vector<long> unlabeled = {32, 64, 160, 320};
  std::vector<double> ratios = {1.0, 2.0, 5.0, 10.0}, uds_means;
  bool dominated = true;
  Stat spl_last, pds_last;
  for (long nu : unlabeled) {
    auto at = [nu](const ResultRow& r) { return r.n_unlabeled == nu; };
    Stat spl = stat_of(rows, "SPL", "regret", at);
    Stat pl = stat_of(rows, "PL", "regret", at);
    Stat noshare = stat_of(rows, "NoShare", "regret", at);
    Stat pds = stat_of(rows, "PDS", "regret", at);
    Stat uds = stat_of(rows, "UDS", "regret", at);
    if (spl.n != 100 || pl.n != 100 || noshare.n != 100 || pds.n != 100 || uds.n != 100)
      return {false, fmt("missing replications at n_unlabeled=%ld", nu)};
    dominated = dominated && spl.mean <= pl.mean && spl.mean <= noshare.mean;
    uds_means.push_back(uds.mean);
    if (nu == 320) {
      spl_last = spl;
      pds_last = pds;
    }
  }
  const double rho = spearman(ratios, uds_means);
  const double slack = pooled_se(spl_last, pds_last);
  bool near_pds = spl_last.mean <= pds_last.mean + slack;
  bool pass = dominated && rho >= 0.0 && near_pds;
  return {pass, fmt("spl<=pl,noshare=%s, uds spearman=%.2f, spl-pds@10=%.3f (slack %.3f)",
                    dominated ? "ok" : "violated", rho, spl_last.mean - pds_last.mean, slack)};
}

Outcome halfwidth_tightness() {
  LinearGaussianEnv env;
  SuqConfig sc;
  sc.r_max = env.r_max();
  TightnessSummary rep = uq_tightness_report(env, sc, tightness_grid_50(), 100, 32, 320, 30, kSeed);
  bool frac_ok = rep.frac_improved >= 0.9;

  SuqConfig zero = sc;
  zero.aux_override = [](const Vec2&, int) { return 0.0; };
  TightnessSummary degenerate =
      uq_tightness_report(env, zero, tightness_grid_50(), 100, 32, 320, 30, kSeed);
  double worst = 0.0;
  for (const auto& p : degenerate.points) {
    // both halfwidths vanish where the features are identically zero
    if (p.mean_delta_ini == 0.0)
      worst = std::max(worst, std::abs(p.mean_delta_sug));
    else
      worst = std::max(worst, std::abs(p.mean_delta_sug / p.mean_delta_ini - 1.0));
  }
  bool degenerate_ok = worst <= 1e-10;
  return {frac_ok && degenerate_ok,
          fmt("frac_improved=%.2f (need 0.90), zero-aux ratio off by %.1e (allow 1e-10)",
              rep.frac_improved, worst)};
}

Outcome coverage_calibration() {
  LinearGaussianEnv env;
  // The bound's validity argument assumes the auxiliary is a blend of the true
  // reward and the features with small independent error; an auxiliary of that
  // form keeps the residual stream independent across tuples. Single-step
  // rollouts make every tuple an independent draw from the start distribution.
  auto features = std::make_shared<FeatureMap>(FeatureMap::poly2());
  Eigen::VectorXd beta1 = Eigen::VectorXd::Zero(features->dim());
  beta1[0] = 0.3;
  beta1[2] = -0.2;
  SuqConfig sc;
  sc.alpha = 0.05;
  sc.r_max = env.r_max();
  sc.aux_override = [features, beta1](const Vec2& s, int a) {
    const double true_mean = 5.0 * (a - 1) * (s.x() + s.y());
    return 0.8 * true_mean + beta1.dot((*features)(s, a));
  };
  CoverageSummary rep = coverage_report(env, sc, coverage_grid_20(), 500, 120, 1200, 1, kSeed);
  bool pass = rep.min_coverage >= 0.92 && rep.points.size() == 20;
  return {pass, fmt("min=%.3f mean=%.3f over %zu probes (need min 0.92)", rep.min_coverage,
                    rep.mean_coverage, rep.points.size())};
}

TabularMDP random_mdp(int n_states, int n_actions, std::uint64_t seed) {
  Rng rng(seed);
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.reward_mean.resize(n_states, n_actions);
  mdp.reward_std = Eigen::MatrixXd::Constant(n_states, n_actions, 0.5);
  for (int a = 0; a < n_actions; ++a) {
    Eigen::MatrixXd T(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      for (int j = 0; j < n_states; ++j) T(s, j) = draw_uniform(rng) + 0.05;
      T.row(s) /= T.row(s).sum();
      mdp.reward_mean(s, a) = draw_normal(rng, 0, 1);
    }
    mdp.transition.push_back(T);
  }
  mdp.gamma = 0.9;
  mdp.initial_dist = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
  return mdp;
}

Outcome planner_agreement() {
  TabularMDP truth = random_mdp(5, 3, 77);
  TabularEnv env(truth);
  StateCodec codec = StateCodec::identity();
  OfflineDataset data = generate_offline_data(env, Policy::uniform_random(3), 300, 10, true, 5);

  Eigen::MatrixXd counts = pair_visit_counts(data, codec, 5, 3);
  if (counts.minCoeff() <= 0.0) return {false, "empirical model has an unvisited pair"};

  TabularMDP hat = truth;
  hat.transition = empirical_transition(data, codec, 5, 3);
  Eigen::MatrixXd reward_hat = Eigen::MatrixXd::Zero(5, 3);
  for (const auto& t : data.labeled) reward_hat(codec.to_index(t.s), t.a) += t.r;
  reward_hat.array() /= counts.array();
  hat.reward_mean = reward_hat;
  hat.reward_std.setZero();
  QFunction vi = value_iteration(hat, reward_hat, 1e-14);

  TrainingSet train;
  for (const auto& t : data.labeled) train.tuples.push_back({t.s, t.a, t.r, t.s_next});
  auto features = std::make_shared<FeatureMap>(FeatureMap::tabular_onehot(codec, 5, 3));
  FqiConfig cfg;
  cfg.gamma = truth.gamma;
  cfg.ridge = 0.0;
  cfg.tol = 1e-14;
  cfg.max_iter = 2000;
  QFunction fq = fqi(train, features, cfg);

  double worst = 0.0;
  for (int s = 0; s < 5; ++s)
    for (int a = 0; a < 3; ++a)
      worst = std::max(worst, std::abs(fq.value(codec.to_vec(s), a) - vi.table(s, a)));

  const double c = 1.7;
  TrainingSet shifted = train;
  for (auto& t : shifted.tuples) t.r += c;
  QFunction fs = fqi(shifted, features, cfg);
  const double lift = c / (1.0 - truth.gamma);
  double worst_lift = 0.0;
  bool greedy_same = true;
  for (int s = 0; s < 5; ++s) {
    Vec2 v = codec.to_vec(s);
    for (int a = 0; a < 3; ++a)
      worst_lift = std::max(worst_lift, std::abs(fs.value(v, a) - fq.value(v, a) - lift));
    greedy_same = greedy_same && fs.greedy(v) == fq.greedy(v);
  }
  bool pass = worst <= 1e-8 && greedy_same && worst_lift <= 1e-6;
  return {pass, fmt("fqi-vi diff=%.1e (allow 1e-8), shift argmax %s, lift off by %.1e", worst,
                    greedy_same ? "invariant" : "changed", worst_lift)};
}

Outcome min_imputation_bound() {
  GridEnv env;
  const TabularMDP& mdp = env.mdp();
  Policy behavior = epsilon_greedy_optimal(env, 0.1);
  Eigen::MatrixXd d = discounted_visitation(mdp, behavior);
  const double floor = mdp.reward_mean.minCoeff();
  double lhs_sq = 0.0, rhs = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double excess = mdp.reward_mean(s, a) - floor;
      lhs_sq += d(s, a) * excess * excess;
      rhs += d(s, a) * excess;
    }
  const double lhs = std::sqrt(lhs_sq);
  return {lhs + 1e-12 >= rhs, fmt("weighted error %.4f >= mean excess %.4f", lhs, rhs)};
}

Outcome transition_penalty_trend() {
  auto rows = run_preset("fig5", "c8", nullptr);
  auto diff = [&](double eps) {
    auto at = [eps](const ResultRow& r) { return std::abs(r.epsilon - eps) < 1e-12; };
    return stat_of(rows, "PPL", "return", at).mean - stat_of(rows, "SPL", "return", at).mean;
  };
  const double lo = diff(0.1), hi = diff(0.9);
  return {lo > hi, fmt("ppl-spl diff: %.3f at eps=0.1 vs %.3f at eps=0.9", lo, hi)};
}

Outcome manifest_determinism() {
  struct Case {
    std::string preset;
    std::function<void(ExperimentConfig&)> tweak;
  };
  std::vector<Case> cases = {
      {"fig1b-ratio", [](ExperimentConfig& c) { c.n_reps = 5; }},
      {"fig2b", [](ExperimentConfig& c) { c.n_reps = 5; }},
      {"tightness", [](ExperimentConfig& c) { c.n_refits = 10; }},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    RunOutputs first;
    run_preset(cases[i].preset, fmt("c9-%zu", i), cases[i].tweak, &first);
    ExperimentConfig cfg = ExperimentConfig::from_json_file(first.manifest_path);
    RunOutputs second = run_experiment(cfg, work_dir(fmt("c9-%zu-rerun", i)).string());
    if (slurp(first.results_path) != slurp(second.results_path))
      return {false, fmt("%s rerun diverged", cases[i].preset.c_str())};
  }
  return {true, "grid sweep, linear sweep, and refit report all byte-identical"};
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
    double max_seconds;
    bool soft;
  };
  const std::vector<Entry> entries = {
      {"grid return ordering across unlabeled ratios", grid_ratio_ordering, 180.0, false},
      {"pseudo-label gap shrinks as labeled exploration grows", grid_epsilon_gap, 180.0, false},
      {"linear-system regret ordering across data ratios", linear_regret_ordering, 900.0, false},
      {"semi-supervised halfwidths tighten on labeled-only", halfwidth_tightness, 120.0, false},
      {"pessimistic bound covers the true reward", coverage_calibration, 120.0, false},
      {"fitted iteration agrees with exact planning", planner_agreement, 10.0, false},
      {"minimal imputation error floor", min_imputation_bound, 10.0, false},
      {"transition penalty helps under exploratory unlabeled data", transition_penalty_trend, 0.0,
       true},
      {"manifest reruns are byte-identical", manifest_determinism, 0.0, false},
  };

  int failures = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    Outcome out;
    auto t0 = std::chrono::steady_clock::now();
    try {
      out = e.run();
    } catch (const std::exception& ex) {
      out = {false, std::string("exception: ") + ex.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (e.max_seconds > 0.0 && secs > e.max_seconds) {
      out.pass = false;
      out.detail += fmt("; exceeded %.0fs budget", e.max_seconds);
    }
    std::printf("[%s]%s criterion %zu: %s (%s; %.1fs)\n", out.pass ? "PASS" : "FAIL",
                e.soft ? " [soft]" : "", i + 1, e.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass && !e.soft) ++failures;
  }
  if (failures == 0)
    std::printf("acceptance: all gating criteria passed\n");
  else
    std::printf("acceptance: %d gating criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
