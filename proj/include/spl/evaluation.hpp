#pragma once

#include <atomic>
#include <thread>

#include "spl/baselines.hpp"

namespace spl {

struct EvalConfig {
  int n_trajectories = 100;
  int horizon = 20;
  double gamma = 0.99;
  bool discounted = true;

  static EvalConfig for_grid() { return {500, 2, 1.0, false}; }
  static EvalConfig for_linear_gaussian() { return {100, 20, 0.99, true}; }
  static EvalConfig defaults(const Environment& env);
};

// Monte Carlo policy value from fresh rollouts; the seed fixes initial
// states and all environment noise.
double mc_return(const Environment& env, const Policy& policy, const EvalConfig& cfg,
                 std::uint64_t seed);

// value(optimal) - value(candidate) under common random numbers: both sides
// reuse the same seed, so evaluating the optimal policy against itself gives
// exactly zero.
double regret(const Environment& env, const Policy& candidate, const Policy& optimal,
              const EvalConfig& cfg, std::uint64_t seed);

// Fixed probe grids over the linear system's typical state range.
std::vector<std::pair<Vec2, int>> coverage_grid_20();
std::vector<std::pair<Vec2, int>> tightness_grid_50();

struct CoveragePoint {
  Vec2 s;
  int a = 0;
  double freq_covered = 0.0;  // fraction of refits with r_pess <= true mean
  double mean_delta = 0.0;
};

struct CoverageSummary {
  std::vector<CoveragePoint> points;
  double min_coverage = 0.0;
  double mean_coverage = 0.0;
  std::vector<int> flagged;  // points below 1 - alpha - 0.03
  double alpha = 0.05;
  int n_reps = 0;
};

// Repeatedly regenerates data from the linear system (where the true mean
// reward is exactly linear in the degree-2 basis), refits the semi-supervised
// lower bound, and records how often it stays below the truth at each probe.
CoverageSummary coverage_report(const LinearGaussianEnv& env, const SuqConfig& cfg,
                                const std::vector<std::pair<Vec2, int>>& points, int n_reps,
                                long n_labeled, long n_unlabeled, int horizon, std::uint64_t seed);

struct TightnessPoint {
  Vec2 s;
  int a = 0;
  double mean_delta_ini = 0.0;
  double mean_delta_sug = 0.0;
};

struct TightnessSummary {
  std::vector<TightnessPoint> points;
  double frac_improved = 0.0;  // fraction of probes with mean sug <= mean ini
  double mean_ratio = 0.0;     // mean over probes of sug / ini
  int n_reps = 0;
};

// Compares the labeled-only and semi-supervised halfwidths over replications
// of the same data-generating process.
TightnessSummary uq_tightness_report(const LinearGaussianEnv& env, const SuqConfig& cfg,
                                     const std::vector<std::pair<Vec2, int>>& points, int n_reps,
                                     long n_labeled, long n_unlabeled, int horizon,
                                     std::uint64_t seed);

// Runs `worker(rep, base_seed + rep)` for each replication, optionally on a
// small thread pool. Results come back ordered by replication index, so the
// output is independent of the parallelism level.
template <typename T>
std::vector<T> run_replications(int n_reps, std::uint64_t base_seed, int parallelism,
                                const std::function<T(int, std::uint64_t)>& worker) {
  std::vector<T> out(static_cast<std::size_t>(n_reps));
  if (parallelism <= 1) {
    for (int i = 0; i < n_reps; ++i) out[static_cast<std::size_t>(i)] = worker(i, base_seed + i);
    return out;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  auto drain = [&] {
    for (int i = next.fetch_add(1); i < n_reps; i = next.fetch_add(1))
      out[static_cast<std::size_t>(i)] = worker(i, base_seed + i);
  };
  for (int t = 0; t < parallelism; ++t) pool.emplace_back(drain);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace spl
