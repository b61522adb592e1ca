#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spl/experiments.hpp"

namespace {

int run_command(const std::string& experiment, const std::string& config_path,
                const std::vector<std::string>& sets, int reps, long long seed, bool seed_given,
                int parallel, std::string out_dir) {
  spl::ExperimentConfig cfg;
  bool config_has_seed = false;
  if (!config_path.empty()) {
    cfg = spl::ExperimentConfig::from_json_file(config_path);
    std::ifstream in(config_path);
    auto doc = nlohmann::json::parse(in);
    if (doc.contains("config")) doc = doc.at("config");
    config_has_seed = doc.contains("seed");
  } else if (!experiment.empty()) {
    cfg = spl::ExperimentConfig::defaults(experiment);
  } else {
    throw spl::ConfigError("provide --experiment or --config");
  }

  for (const auto& s : sets) {
    cfg.apply_override(s);
    if (s.rfind("seed=", 0) == 0) config_has_seed = true;
  }
  if (reps > 0) cfg.n_reps = reps;
  if (parallel > 0) cfg.parallelism = parallel;
  if (seed_given) {
    cfg.seed = static_cast<std::uint64_t>(seed);
  } else if (!config_has_seed) {
    if (const char* env_seed = std::getenv("SPL_SEED"))
      cfg.seed = static_cast<std::uint64_t>(std::stoull(env_seed));
  }

  if (out_dir.empty()) out_dir = "runs/" + cfg.experiment;
  spl::RunOutputs out = spl::run_experiment(cfg, out_dir);
  std::cout << "results:  " << out.results_path << '\n'
            << "summary:  " << out.summary_path << '\n'
            << "manifest: " << out.manifest_path << '\n';
  return 0;
}

int summarize_command(const std::string& results_path, const std::string& experiment,
                      std::string out_path) {
  auto rows = spl::read_results_csv(results_path);
  auto summary = spl::summarize(rows, experiment);
  if (out_path.empty())
    out_path = (std::filesystem::path(results_path).parent_path() / "summary.csv").string();
  spl::write_summary_csv(out_path, summary);
  std::cout << "summary:  " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline RL benchmark with semi-supervised pessimistic reward labeling"};
  app.require_subcommand(1);

  std::string experiment, config_path, out_dir;
  std::vector<std::string> sets;
  int reps = -1, parallel = -1;
  long long seed = 0;

  auto* run = app.add_subcommand("run", "Run an experiment and write results/summary/manifest");
  auto* exp_opt = run->add_option("-e,--experiment", experiment, "Named experiment preset");
  auto* cfg_opt = run->add_option("-c,--config", config_path, "JSON config or prior manifest");
  exp_opt->excludes(cfg_opt);
  cfg_opt->excludes(exp_opt);
  run->add_option("--set", sets, "Override a config key, key=value")->take_all();
  run->add_option("--reps", reps, "Replication count");
  auto* seed_opt = run->add_option("--seed", seed, "Base seed");
  run->add_option("--parallel", parallel, "Worker threads for replications");
  run->add_option("-o,--out", out_dir, "Output directory (default runs/<experiment>)");

  std::string results_path, summarize_experiment = "custom", summary_out;
  auto* summ = app.add_subcommand("summarize", "Recompute the summary table from a results file");
  summ->add_option("-i,--in", results_path, "results.csv path")->required();
  summ->add_option("-e,--experiment", summarize_experiment, "Experiment label for the summary");
  summ->add_option("-o,--out", summary_out, "Summary path (default alongside results)");

  auto* lst = app.add_subcommand("list-experiments", "List named experiment presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (lst->parsed()) {
      for (const auto& name : spl::list_experiments()) std::cout << name << '\n';
      return 0;
    }
    if (summ->parsed()) return summarize_command(results_path, summarize_experiment, summary_out);
    return run_command(experiment, config_path, sets, reps, seed, seed_opt->count() > 0, parallel,
                       out_dir);
  } catch (const spl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
