#include "spl/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace spl {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint64_t kGenLabeledTag = 0xda7a1;
constexpr std::uint64_t kGenUnlabeledTag = 0xda7a0;
constexpr std::uint64_t kThinTag = 0xf11;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a number for '" + key + "', got '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected an integer for '" + key + "', got '" + s + "'");
  }
}

std::vector<double> as_double_list(const Json& v, const std::string& key) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<double>());
    return out;
  }
  if (v.is_string()) {
    for (const auto& tok : split(v.get<std::string>(), ',')) out.push_back(parse_double(tok, key));
    return out;
  }
  if (v.is_number()) return {v.get<double>()};
  throw ConfigError("expected a list for '" + key + "'");
}

std::vector<long> as_long_list(const Json& v, const std::string& key) {
  std::vector<long> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<long>());
    return out;
  }
  if (v.is_string()) {
    for (const auto& tok : split(v.get<std::string>(), ',')) out.push_back(parse_long(tok, key));
    return out;
  }
  if (v.is_number_integer()) return {v.get<long>()};
  throw ConfigError("expected a list for '" + key + "'");
}

std::vector<std::string> as_string_list(const Json& v, const std::string& key) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<std::string>());
    return out;
  }
  if (v.is_string()) return split(v.get<std::string>(), ',');
  throw ConfigError("expected a list for '" + key + "'");
}

template <typename T>
T as_number(const Json& v, const std::string& key) {
  if (v.is_number()) return v.get<T>();
  if (v.is_string()) {
    if constexpr (std::is_floating_point_v<T>)
      return static_cast<T>(parse_double(v.get<std::string>(), key));
    else
      return static_cast<T>(parse_long(v.get<std::string>(), key));
  }
  throw ConfigError("expected a number for '" + key + "'");
}

bool as_bool(const Json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  throw ConfigError("expected true/false for '" + key + "'");
}

void apply_field(ExperimentConfig& cfg, const std::string& key, const Json& v) {
  if (key == "experiment") cfg.experiment = v.get<std::string>();
  else if (key == "environment") cfg.environment = v.get<std::string>();
  else if (key == "methods") cfg.methods = as_string_list(v, key);
  else if (key == "n_reps") cfg.n_reps = as_number<int>(v, key);
  else if (key == "seed") cfg.seed = as_number<std::uint64_t>(v, key);
  else if (key == "parallelism") cfg.parallelism = as_number<int>(v, key);
  else if (key == "n_labeled") cfg.n_labeled = as_number<long>(v, key);
  else if (key == "n_unlabeled") cfg.n_unlabeled = as_number<long>(v, key);
  else if (key == "ratio") cfg.ratio = as_number<double>(v, key);
  else if (key == "ratios") cfg.ratios = as_double_list(v, key);
  else if (key == "n_labeled_values") cfg.n_labeled_values = as_long_list(v, key);
  else if (key == "epsilons") cfg.epsilons = as_double_list(v, key);
  else if (key == "epsilon_axis") cfg.epsilon_axis = v.get<std::string>();
  else if (key == "epsilon_labeled") cfg.epsilon_labeled = as_number<double>(v, key);
  else if (key == "coverage_mode") cfg.coverage_mode = v.get<std::string>();
  else if (key == "remove_fraction") cfg.remove_fraction = as_number<double>(v, key);
  else if (key == "alpha") cfg.alpha = as_number<double>(v, key);
  else if (key == "quantile") cfg.quantile = as_number<double>(v, key);
  else if (key == "tabular_z") cfg.tabular_z = as_number<double>(v, key);
  else if (key == "pds_beta") cfg.pds_beta = as_number<double>(v, key);
  else if (key == "horizon_grid") cfg.horizon_grid = as_number<int>(v, key);
  else if (key == "horizon_linear") cfg.horizon_linear = as_number<int>(v, key);
  else if (key == "n_trees") cfg.n_trees = as_number<int>(v, key);
  else if (key == "tree_depth") cfg.tree_depth = as_number<int>(v, key);
  else if (key == "oob_residuals") cfg.oob_residuals = as_bool(v, key);
  else if (key == "taw_oracle") cfg.taw_oracle = as_bool(v, key);
  else if (key == "eval_trajectories") cfg.eval_trajectories = as_number<int>(v, key);
  else if (key == "eval_horizon") cfg.eval_horizon = as_number<int>(v, key);
  else if (key == "n_refits") cfg.n_refits = as_number<int>(v, key);
  else throw ConfigError("unknown config key: " + key);
}

std::string cell_label(long nl, long nu, double eps, const std::string& cov) {
  char buf[128];
  if (std::isnan(eps))
    std::snprintf(buf, sizeof(buf), "nL=%ld;nU=%ld;eps=none;cov=%s", nl, nu, cov.c_str());
  else
    std::snprintf(buf, sizeof(buf), "nL=%ld;nU=%ld;eps=%g;cov=%s", nl, nu, eps, cov.c_str());
  return buf;
}

struct Cell {
  long n_labeled = 0;
  long n_unlabeled = 0;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
};

long resolve_unlabeled(const ExperimentConfig& cfg, long n_labeled) {
  if (cfg.n_unlabeled >= 0) return cfg.n_unlabeled;
  return std::lround(cfg.ratio * static_cast<double>(n_labeled));
}

std::vector<Cell> expand_cells(const ExperimentConfig& cfg) {
  int axes = (!cfg.ratios.empty() ? 1 : 0) + (!cfg.n_labeled_values.empty() ? 1 : 0) +
             (!cfg.epsilons.empty() ? 1 : 0);
  if (axes > 1) throw ConfigError("at most one sweep axis (ratios, n_labeled_values, epsilons)");
  std::vector<Cell> cells;
  if (!cfg.n_labeled_values.empty()) {
    for (long nl : cfg.n_labeled_values)
      cells.push_back({nl, resolve_unlabeled(cfg, nl),
                       std::numeric_limits<double>::quiet_NaN()});
  } else if (!cfg.ratios.empty()) {
    for (double r : cfg.ratios)
      cells.push_back({cfg.n_labeled,
                       std::lround(r * static_cast<double>(cfg.n_labeled)),
                       std::numeric_limits<double>::quiet_NaN()});
  } else if (!cfg.epsilons.empty()) {
    for (double eps : cfg.epsilons)
      cells.push_back({cfg.n_labeled, resolve_unlabeled(cfg, cfg.n_labeled), eps});
  } else {
    cells.push_back({cfg.n_labeled, resolve_unlabeled(cfg, cfg.n_labeled),
                     std::numeric_limits<double>::quiet_NaN()});
  }
  return cells;
}

bool is_report(const std::string& name) { return name == "coverage" || name == "tightness"; }

void validate(const ExperimentConfig& cfg) {
  if (cfg.environment != "grid" && cfg.environment != "linear_gaussian")
    throw ConfigError("environment must be grid or linear_gaussian, got '" + cfg.environment + "'");
  if (cfg.n_reps <= 0) throw ConfigError("n_reps must be positive");
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (cfg.n_labeled <= 0) throw ConfigError("n_labeled must be positive");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (cfg.quantile >= 0.0 && cfg.quantile > 1.0) throw ConfigError("quantile must lie in [0, 1]");
  if (cfg.epsilon_axis != "labeled" && cfg.epsilon_axis != "unlabeled")
    throw ConfigError("epsilon_axis must be labeled or unlabeled");
  if (cfg.coverage_mode != "full" && cfg.coverage_mode != "partial")
    throw ConfigError("coverage_mode must be full or partial");
  if (cfg.environment == "grid" && cfg.coverage_mode != "full")
    throw ConfigError("partial coverage thinning is defined for the linear system only");
  if (is_report(cfg.experiment)) {
    if (cfg.environment != "linear_gaussian")
      throw ConfigError(cfg.experiment + " runs on the linear system only");
    if (cfg.n_refits <= 0) throw ConfigError("n_refits must be positive");
    return;
  }
  if (cfg.methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& name : cfg.methods) {
    Method m;
    try {
      m = method_from_string(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (cfg.environment == "linear_gaussian" && (m == Method::Oracle || m == Method::PPL))
      throw ConfigError(name + " requires the grid environment");
  }
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

MethodConfig method_config(const ExperimentConfig& cfg) {
  MethodConfig m;
  m.alpha = cfg.alpha;
  m.quantile = cfg.quantile >= 0.0 ? cfg.quantile : (cfg.coverage_mode == "partial" ? 0.3 : 0.9);
  m.tabular_z = cfg.tabular_z;
  m.pds_beta = cfg.pds_beta;
  m.aux.n_trees = cfg.n_trees;
  m.aux.max_depth = cfg.tree_depth;
  m.oob_residuals = cfg.oob_residuals;
  m.taw_oracle = cfg.taw_oracle;
  return m;
}

EvalConfig eval_config(const ExperimentConfig& cfg, const Environment& env) {
  EvalConfig e = EvalConfig::defaults(env);
  if (cfg.eval_trajectories > 0) e.n_trajectories = cfg.eval_trajectories;
  if (cfg.eval_horizon > 0) e.horizon = cfg.eval_horizon;
  return e;
}

SuqConfig report_suq_config(const ExperimentConfig& cfg, const LinearGaussianEnv& env) {
  SuqConfig sc;
  sc.aux.n_trees = cfg.n_trees;
  sc.aux.max_depth = cfg.tree_depth;
  sc.alpha = cfg.alpha;
  sc.r_max = env.r_max();
  sc.oob_residuals = cfg.oob_residuals;
  return sc;
}

std::vector<ResultRow> run_coverage(const ExperimentConfig& cfg) {
  LinearGaussianEnv env;
  const long nu = resolve_unlabeled(cfg, cfg.n_labeled);
  CoverageSummary rep =
      coverage_report(env, report_suq_config(cfg, env), coverage_grid_20(), cfg.n_refits,
                      cfg.n_labeled, nu, cfg.horizon_linear, cfg.seed);
  std::vector<ResultRow> rows;
  auto add = [&](int idx, const std::string& metric, double value) {
    rows.push_back({"SUQ", idx, metric, value, cfg.n_labeled, nu,
                    std::numeric_limits<double>::quiet_NaN(), cfg.coverage_mode, cfg.seed});
  };
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    add(static_cast<int>(i), "freq_covered", rep.points[i].freq_covered);
    add(static_cast<int>(i), "mean_delta", rep.points[i].mean_delta);
  }
  add(0, "min_coverage", rep.min_coverage);
  add(0, "mean_coverage", rep.mean_coverage);
  add(0, "n_flagged", static_cast<double>(rep.flagged.size()));
  return rows;
}

std::vector<ResultRow> run_tightness(const ExperimentConfig& cfg) {
  LinearGaussianEnv env;
  const long nu = resolve_unlabeled(cfg, cfg.n_labeled);
  TightnessSummary rep =
      uq_tightness_report(env, report_suq_config(cfg, env), tightness_grid_50(), cfg.n_refits,
                          cfg.n_labeled, nu, cfg.horizon_linear, cfg.seed);
  std::vector<ResultRow> rows;
  auto add = [&](int idx, const std::string& metric, double value) {
    rows.push_back({"SUQ", idx, metric, value, cfg.n_labeled, nu,
                    std::numeric_limits<double>::quiet_NaN(), cfg.coverage_mode, cfg.seed});
  };
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    add(static_cast<int>(i), "delta_ini_mean", rep.points[i].mean_delta_ini);
    add(static_cast<int>(i), "delta_sug_mean", rep.points[i].mean_delta_sug);
  }
  add(0, "frac_improved", rep.frac_improved);
  add(0, "mean_ratio", rep.mean_ratio);
  return rows;
}

std::vector<ResultRow> run_cells(const ExperimentConfig& cfg) {
  const bool grid = cfg.environment == "grid";
  std::unique_ptr<Environment> env;
  if (grid)
    env = std::make_unique<GridEnv>();
  else
    env = std::make_unique<LinearGaussianEnv>();

  Policy optimal = grid ? optimal_policy(static_cast<const GridEnv&>(*env))
                        : optimal_policy(static_cast<const LinearGaussianEnv&>(*env));
  const EvalConfig eval = eval_config(cfg, *env);
  const MethodConfig mcfg = method_config(cfg);
  const int horizon = grid ? cfg.horizon_grid : cfg.horizon_linear;

  std::vector<Method> methods;
  for (const auto& name : cfg.methods) methods.push_back(method_from_string(name));

  std::vector<ResultRow> rows;
  for (const Cell& cell : expand_cells(cfg)) {
    auto worker = [&](int, std::uint64_t rep_seed) {
      OfflineDataset labeled, unlabeled;
      if (grid) {
        const auto& genv = static_cast<const GridEnv&>(*env);
        const bool sweep = !std::isnan(cell.epsilon);
        const double eps_l =
            sweep && cfg.epsilon_axis == "labeled" ? cell.epsilon : cfg.epsilon_labeled;
        Policy bl = epsilon_greedy_optimal(genv, eps_l);
        Policy bu = sweep && cfg.epsilon_axis == "unlabeled"
                        ? epsilon_greedy_optimal(genv, cell.epsilon)
                        : Policy::uniform_random(env->n_actions());
        labeled = generate_tuples(*env, bl, static_cast<int>(cell.n_labeled), horizon, true,
                                  seed_stream(rep_seed, kGenLabeledTag));
        unlabeled = generate_tuples(*env, bu, static_cast<int>(cell.n_unlabeled), horizon, false,
                                    seed_stream(rep_seed, kGenUnlabeledTag));
      } else {
        Policy behavior = Policy::uniform_random(env->n_actions());
        labeled = generate_tuples(*env, behavior, static_cast<int>(cell.n_labeled), horizon, true,
                                  seed_stream(rep_seed, kGenLabeledTag));
        if (cfg.coverage_mode == "partial")
          labeled = remove_suboptimal_fraction(labeled,
                                               static_cast<const LinearGaussianEnv&>(*env),
                                               cfg.remove_fraction, seed_stream(rep_seed, kThinTag));
        unlabeled = generate_tuples(*env, behavior, static_cast<int>(cell.n_unlabeled), horizon,
                                    false, seed_stream(rep_seed, kGenUnlabeledTag));
      }
      OfflineDataset data = merged(std::move(labeled), std::move(unlabeled));
      data.seed = rep_seed;

      std::vector<ResultRow> local;
      for (Method m : methods) {
        ResultRow base{to_string(m), 0, grid ? "return" : "regret", 0.0, cell.n_labeled,
                       cell.n_unlabeled, cell.epsilon, cfg.coverage_mode, rep_seed};
        try {
          MethodRun run =
              run_method(*env, data, m, mcfg, default_planner(*env, rep_seed), rep_seed);
          base.value = grid ? mc_return(*env, run.policy, eval, rep_seed)
                            : regret(*env, run.policy, optimal, eval, rep_seed);
          local.push_back(base);
          base.metric = "n_unlabeled_used";
          base.value = static_cast<double>(run.diag.n_unlabeled_used);
          local.push_back(base);
          if (run.diag.n_unlabeled_used > 0) {
            base.metric = "mean_imputed_reward";
            base.value = run.diag.mean_imputed;
            local.push_back(base);
            base.metric = "mean_delta";
            base.value = run.diag.mean_delta;
            local.push_back(base);
          }
        } catch (const std::exception&) {
          base.metric = "error";
          base.value = 1.0;
          local.push_back(base);
        }
      }
      return local;
    };
    auto per_rep = run_replications<std::vector<ResultRow>>(cfg.n_reps, cfg.seed, cfg.parallelism,
                                                            worker);
    for (int rep = 0; rep < cfg.n_reps; ++rep)
      for (ResultRow row : per_rep[static_cast<std::size_t>(rep)]) {
        row.rep = rep;
        rows.push_back(std::move(row));
      }
  }
  return rows;
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "method,rep,metric,value,n_labeled,n_unlabeled,epsilon,coverage_mode,seed\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.rep << ',' << r.metric << ',' << fmt_double(r.value) << ','
        << r.n_labeled << ',' << r.n_unlabeled << ','
        << (std::isnan(r.epsilon) ? std::string() : fmt_double(r.epsilon)) << ','
        << r.coverage_mode << ',' << r.seed << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty results file: " + path);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 9) throw std::runtime_error("malformed results row: " + line);
    ResultRow r;
    r.method = f[0];
    r.rep = static_cast<int>(parse_long(f[1], "rep"));
    r.metric = f[2];
    r.value = parse_double(f[3], "value");
    r.n_labeled = parse_long(f[4], "n_labeled");
    r.n_unlabeled = parse_long(f[5], "n_unlabeled");
    r.epsilon = f[6].empty() ? std::numeric_limits<double>::quiet_NaN()
                             : parse_double(f[6], "epsilon");
    r.coverage_mode = f[7];
    r.seed = static_cast<std::uint64_t>(std::stoull(f[8]));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows,
                                  const std::string& experiment) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> values;
  auto find = [&](const std::string& cell, const std::string& method,
                  const std::string& metric) -> std::size_t {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i].cell == cell && out[i].method == method && out[i].metric == metric) return i;
    out.push_back({experiment, cell, method, metric, 0.0, 0.0, 0});
    values.emplace_back();
    return out.size() - 1;
  };
  for (const auto& r : rows) {
    std::size_t i =
        find(cell_label(r.n_labeled, r.n_unlabeled, r.epsilon, r.coverage_mode), r.method, r.metric);
    values[i].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean = mean_of(values[i]);
    out[i].se = stderr_of(values[i]);
    out[i].count = static_cast<long>(values[i].size());
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "experiment,cell,method,metric,mean,stderr,count\n";
  for (const auto& r : rows)
    out << r.experiment << ',' << r.cell << ',' << r.method << ',' << r.metric << ','
        << fmt_double(r.mean) << ',' << fmt_double(r.se) << ',' << r.count << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

ExperimentConfig ExperimentConfig::defaults(const std::string& name) {
  ExperimentConfig c;
  c.experiment = name;
  if (name == "custom") return c;
  if (name == "fig1b-ratio") {
    c.environment = "grid";
    c.methods = {"PL", "SPL", "Oracle"};
    c.n_labeled = 120;
    c.ratios = {0.25, 0.5, 1.0, 1.25};
    c.n_reps = 20;
    return c;
  }
  if (name == "fig1b-epsilon") {
    c.environment = "grid";
    c.methods = {"PL", "SPL", "Oracle"};
    c.n_labeled = 120;
    c.n_unlabeled = 150;
    c.epsilons = {0.1, 0.3, 0.5, 0.7, 0.9};
    c.epsilon_axis = "labeled";
    c.n_reps = 20;
    return c;
  }
  if (name == "fig2a") {
    c.environment = "linear_gaussian";
    c.methods = {"NoShare", "PNoShare", "PL", "UDS", "PDS", "SPL"};
    c.n_labeled = 32;
    c.n_labeled_values = {32, 64, 128, 256};
    c.ratio = 10.0;
    c.coverage_mode = "partial";
    c.n_reps = 100;
    return c;
  }
  if (name == "fig2b") {
    c.environment = "linear_gaussian";
    c.methods = {"NoShare", "PNoShare", "PL", "UDS", "PDS", "SPL"};
    c.n_labeled = 32;
    c.ratios = {1.0, 2.0, 5.0, 10.0};
    c.coverage_mode = "partial";
    c.n_reps = 100;
    return c;
  }
  if (name == "fig5") {
    c.environment = "grid";
    c.methods = {"SPL", "PPL"};
    c.n_labeled = 120;
    c.n_unlabeled = 150;
    c.epsilons = {0.1, 0.9};
    c.epsilon_axis = "unlabeled";
    c.taw_oracle = true;  // transition penalty against the known tensor
    c.n_reps = 20;
    return c;
  }
  if (name == "coverage") {
    c.environment = "linear_gaussian";
    c.n_labeled = 32;
    c.n_unlabeled = 320;
    c.n_refits = 500;
    return c;
  }
  if (name == "tightness") {
    c.environment = "linear_gaussian";
    c.n_labeled = 32;
    c.n_unlabeled = 320;
    c.n_refits = 100;
    return c;
  }
  throw ConfigError("unknown experiment: " + name);
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (doc.contains("config")) doc = doc.at("config");  // accept a run manifest
  if (!doc.is_object()) throw ConfigError("config root must be an object");

  ExperimentConfig cfg;
  if (doc.contains("experiment")) cfg = defaults(doc.at("experiment").get<std::string>());
  for (const auto& item : doc.items()) apply_field(cfg, item.key(), item.value());
  return cfg;
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  auto pos = assignment.find('=');
  if (pos == std::string::npos || pos == 0)
    throw ConfigError("expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, pos);
  const std::string raw = assignment.substr(pos + 1);
  Json v;
  try {
    v = Json::parse(raw);
  } catch (const std::exception&) {
    v = raw;
  }
  if (key == "experiment") {
    *this = defaults(raw);
    return;
  }
  apply_field(*this, key, v);
}

std::string ExperimentConfig::to_json() const {
  Json j;
  j["experiment"] = experiment;
  j["environment"] = environment;
  j["methods"] = methods;
  j["n_reps"] = n_reps;
  j["seed"] = seed;
  j["parallelism"] = parallelism;
  j["n_labeled"] = n_labeled;
  j["n_unlabeled"] = n_unlabeled;
  j["ratio"] = ratio;
  j["ratios"] = ratios;
  j["n_labeled_values"] = n_labeled_values;
  j["epsilons"] = epsilons;
  j["epsilon_axis"] = epsilon_axis;
  j["epsilon_labeled"] = epsilon_labeled;
  j["coverage_mode"] = coverage_mode;
  j["remove_fraction"] = remove_fraction;
  j["alpha"] = alpha;
  j["quantile"] = quantile;
  j["tabular_z"] = tabular_z;
  j["pds_beta"] = pds_beta;
  j["horizon_grid"] = horizon_grid;
  j["horizon_linear"] = horizon_linear;
  j["n_trees"] = n_trees;
  j["tree_depth"] = tree_depth;
  j["oob_residuals"] = oob_residuals;
  j["taw_oracle"] = taw_oracle;
  j["eval_trajectories"] = eval_trajectories;
  j["eval_horizon"] = eval_horizon;
  j["n_refits"] = n_refits;
  return j.dump(2);
}

std::vector<std::string> list_experiments() {
  return {"fig1b-ratio", "fig1b-epsilon", "fig2a", "fig2b",
          "fig5",        "coverage",      "tightness", "custom"};
}

RunOutputs run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);

  std::vector<ResultRow> rows;
  if (cfg.experiment == "coverage")
    rows = run_coverage(cfg);
  else if (cfg.experiment == "tightness")
    rows = run_tightness(cfg);
  else
    rows = run_cells(cfg);

  RunOutputs out;
  out.results_path = (std::filesystem::path(out_dir) / "results.csv").string();
  out.summary_path = (std::filesystem::path(out_dir) / "summary.csv").string();
  out.manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();

  write_results_csv(out.results_path, rows);
  write_summary_csv(out.summary_path, summarize(rows, cfg.experiment));

  Json manifest;
  manifest["tool"] = "spl";
  manifest["version"] = "0.1.0";
  manifest["created_utc"] = utc_now();
  manifest["config"] = Json::parse(cfg.to_json());
  manifest["outputs"] = {{"results", "results.csv"}, {"summary", "summary.csv"}};
  std::ofstream mf(out.manifest_path);
  if (!mf) throw std::runtime_error("cannot open for writing: " + out.manifest_path);
  mf << manifest.dump(2) << '\n';
  return out;
}

}  // namespace spl
