#include "spl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spl {

namespace {

constexpr std::uint64_t kAuxTag = 0xf07e;
constexpr std::uint64_t kPlanTag = 0x97a;

bool wants(const std::vector<Method>& ms, Method m) {
  return std::find(ms.begin(), ms.end(), m) != ms.end();
}

double min_labeled_reward(const OfflineDataset& data) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& u : data.labeled) m = std::min(m, u.r);
  return m;
}

}  // namespace

Method method_from_string(const std::string& name) {
  if (name == "NoShare") return Method::NoShare;
  if (name == "PNoShare") return Method::PNoShare;
  if (name == "PL") return Method::PL;
  if (name == "UDS") return Method::UDS;
  if (name == "PDS") return Method::PDS;
  if (name == "SPL") return Method::SPL;
  if (name == "Oracle") return Method::Oracle;
  if (name == "PPL") return Method::PPL;
  throw std::invalid_argument("unknown method: " + name);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::NoShare: return "NoShare";
    case Method::PNoShare: return "PNoShare";
    case Method::PL: return "PL";
    case Method::UDS: return "UDS";
    case Method::PDS: return "PDS";
    case Method::SPL: return "SPL";
    case Method::Oracle: return "Oracle";
    case Method::PPL: return "PPL";
  }
  throw std::logic_error("unknown method enum");
}

FittedModels fit_models(const Environment& env, const OfflineDataset& data,
                        const std::vector<Method>& methods, const MethodConfig& cfg,
                        std::uint64_t seed) {
  FittedModels models;
  models.r_max = env.r_max();
  models.gamma = env.default_gamma();

  const TabularMDP* mdp = nullptr;
  if (const auto* grid = dynamic_cast<const GridEnv*>(&env)) mdp = &grid->mdp();
  if (const auto* tab = dynamic_cast<const TabularEnv*>(&env)) mdp = &tab->mdp();

  if (mdp != nullptr) {
    models.true_mdp = mdp;
    models.lcb =
        tabular_reward_lcb(data, mdp->codec, mdp->n_states, mdp->n_actions, cfg.tabular_z);
    if (wants(methods, Method::PPL)) {
      models.visit_counts = pair_visit_counts(data, mdp->codec, mdp->n_states, mdp->n_actions);
      if (cfg.taw_oracle)
        models.p_hat = empirical_transition(data, mdp->codec, mdp->n_states, mdp->n_actions);
    }
    return models;
  }

  if (dynamic_cast<const LinearGaussianEnv*>(&env) == nullptr)
    throw std::invalid_argument("fit_models: unsupported environment " + env.name());

  models.features = std::make_shared<FeatureMap>(FeatureMap::poly2());
  const bool need_ini =
      wants(methods, Method::PL) || wants(methods, Method::PNoShare) || wants(methods, Method::PDS);
  const bool need_suq = wants(methods, Method::SPL) || wants(methods, Method::PPL);

  if (need_ini) {
    models.ini = std::make_shared<const PessimisticRewardModel>(
        ini_fit(data, models.features, cfg.alpha, cfg.ridge, env.r_max()));
  }
  if (need_suq) {
    SuqConfig sc;
    sc.aux = cfg.aux;
    sc.aux.seed = seed_stream(seed, kAuxTag);
    sc.alpha = cfg.alpha;
    sc.ridge = cfg.ridge;
    sc.r_max = env.r_max();
    sc.oob_residuals = cfg.oob_residuals;
    models.suq =
        std::make_shared<const PessimisticRewardModel>(suq_fit(data, models.features, sc));
  }
  return models;
}

namespace {

struct Accumulator {
  TrainingSet train;
  double imputed_sum = 0.0;
  double delta_sum = 0.0;
  long n_unlabeled_used = 0;

  void add_labeled(const OfflineDataset& data) {
    for (const auto& u : data.labeled) train.tuples.push_back({u.s, u.a, u.r, u.s_next});
  }
  void add_unlabeled(const UnlabeledTuple& u, double r, double delta) {
    train.tuples.push_back({u.s, u.a, r, u.s_next});
    imputed_sum += r;
    delta_sum += delta;
    ++n_unlabeled_used;
  }
  BuildResult finish() {
    BuildResult out;
    out.diag.n_train = train.size();
    out.diag.n_unlabeled_used = n_unlabeled_used;
    if (n_unlabeled_used > 0) {
      out.diag.mean_imputed = imputed_sum / static_cast<double>(n_unlabeled_used);
      out.diag.mean_delta = delta_sum / static_cast<double>(n_unlabeled_used);
    }
    out.train = std::move(train);
    return out;
  }
};

double clip_reward(double r, double r_max) { return std::clamp(r, -r_max, r_max); }

BuildResult build_tabular(Method m, const OfflineDataset& data, const FittedModels& models,
                          const MethodConfig& cfg) {
  const TabularLcb& lcb = *models.lcb;
  const StateCodec& codec = models.true_mdp->codec;
  Accumulator acc;

  auto taw = [&](int s, int a) {
    if (cfg.taw_oracle)
      return taw_penalty(models.p_hat, models.true_mdp->transition, models.gamma, models.r_max, s, a);
    return taw_penalty_bound(models.visit_counts, cfg.alpha, models.gamma, models.r_max, s, a);
  };

  switch (m) {
    case Method::NoShare:
      acc.add_labeled(data);
      break;
    case Method::PNoShare:
      for (const auto& u : data.labeled) {
        int s = codec.to_index(u.s);
        acc.train.tuples.push_back({u.s, u.a, clip_reward(lcb.lcb(s, u.a), models.r_max), u.s_next});
      }
      break;
    case Method::PL:
      acc.add_labeled(data);
      for (const auto& u : data.unlabeled)
        acc.add_unlabeled(u, lcb.mean(codec.to_index(u.s), u.a), 0.0);
      break;
    case Method::UDS: {
      acc.add_labeled(data);
      double floor = min_labeled_reward(data);
      for (const auto& u : data.unlabeled) acc.add_unlabeled(u, floor, 0.0);
      break;
    }
    case Method::PDS:
    case Method::SPL:
    case Method::Oracle:
      acc.add_labeled(data);
      for (const auto& u : data.unlabeled) {
        int s = codec.to_index(u.s);
        acc.add_unlabeled(u, clip_reward(lcb.lcb(s, u.a), models.r_max), lcb.sd(s, u.a));
      }
      break;
    case Method::PPL:
      acc.add_labeled(data);
      for (const auto& u : data.unlabeled) {
        int s = codec.to_index(u.s);
        double r = lcb.lcb(s, u.a) - lcb.z * taw(s, u.a);
        acc.add_unlabeled(u, clip_reward(r, models.r_max), lcb.sd(s, u.a));
      }
      break;
  }
  return acc.finish();
}

BuildResult build_continuous(Method m, const OfflineDataset& data, const FittedModels& models,
                             const MethodConfig& cfg) {
  Accumulator acc;
  switch (m) {
    case Method::NoShare:
      acc.add_labeled(data);
      break;
    case Method::PNoShare:
      for (const auto& u : data.labeled) {
        auto p = models.ini->predict(u.s, u.a);
        acc.train.tuples.push_back({u.s, u.a, p.r_pess, u.s_next});
      }
      break;
    case Method::PL:
      acc.add_labeled(data);
      for (const auto& u : data.unlabeled)
        acc.add_unlabeled(u, models.ini->r_hat(u.s, u.a), 0.0);
      break;
    case Method::UDS: {
      acc.add_labeled(data);
      double floor = min_labeled_reward(data);
      for (const auto& u : data.unlabeled) acc.add_unlabeled(u, floor, 0.0);
      break;
    }
    case Method::PDS:
      acc.add_labeled(data);
      for (const auto& u : data.unlabeled) {
        auto p = models.ini->predict(u.s, u.a);
        acc.add_unlabeled(u, p.r_pess, p.delta);
      }
      break;
    case Method::SPL: {
      OfflineDataset kept =
          cfg.quantile < 1.0 ? filter_by_uncertainty_quantile(data, *models.suq, cfg.quantile) : data;
      acc.add_labeled(kept);
      for (const auto& u : kept.unlabeled) {
        auto p = models.suq->predict(u.s, u.a);
        acc.add_unlabeled(u, p.r_pess, p.delta);
      }
      break;
    }
    case Method::Oracle:
      throw std::invalid_argument("Oracle planning requires a discrete environment");
    case Method::PPL:
      throw std::invalid_argument("PPL requires a discrete state space");
  }
  return acc.finish();
}

}  // namespace

BuildResult build_training_set(Method m, const OfflineDataset& data, const FittedModels& models,
                               const MethodConfig& cfg) {
  return models.tabular() ? build_tabular(m, data, models, cfg)
                          : build_continuous(m, data, models, cfg);
}

PlannerConfig default_planner(const Environment& env, std::uint64_t seed) {
  PlannerConfig p;
  if (env.name() == "grid" || env.name() == "tabular") {
    p.ql.gamma = env.default_gamma();
    p.ql.lr = 0.001;
    p.ql.n_updates = 60000;
    p.ql.v_max = env.r_max() / (1.0 - env.default_gamma());
    p.ql.seed = seed_stream(seed, kPlanTag);
  } else {
    p.fqi.gamma = env.default_gamma();
    p.fqi.max_iter = 500;
    p.fqi.tol = 1e-6;
    p.fqi.v_max = env.r_max() / (1.0 - env.default_gamma());
  }
  return p;
}

MethodRun run_method(const Environment& env, const OfflineDataset& data, Method m,
                     const MethodConfig& mcfg, const PlannerConfig& pcfg, std::uint64_t seed) {
  FittedModels models = fit_models(env, data, {m}, mcfg, seed);
  BuildResult build = build_training_set(m, data, models, mcfg);

  MethodRun run;
  run.diag = build.diag;

  if (models.tabular()) {
    const TabularMDP& mdp = *models.true_mdp;
    if (m == Method::Oracle) {
      Eigen::MatrixXd reward =
          models.lcb->lcb.cwiseMax(-models.r_max).cwiseMin(models.r_max);
      run.policy = greedy_policy(value_iteration(mdp, reward, 1e-10));
      return run;
    }
    QLearningConfig ql = pcfg.ql;
    if (m == Method::PDS) {
      // count-based analog of the linear information penalty
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
      for (const auto& u : data.labeled) counts(mdp.codec.to_index(u.s), u.a) += 1.0;
      const double ridge = mcfg.ridge >= 0.0
                               ? mcfg.ridge
                               : 1e-8 * static_cast<double>(data.n_labeled()) /
                                     static_cast<double>(mdp.n_states * mdp.n_actions);
      const double beta = mcfg.pds_beta;
      const double v_max = ql.v_max;
      const StateCodec codec = mdp.codec;
      ql.target_penalty = [counts, ridge, beta, v_max, codec](const Vec2& s, int a) {
        return beta * v_max / std::sqrt(counts(codec.to_index(s), a) + ridge);
      };
    }
    run.policy =
        greedy_policy(tabular_q_learning(build.train, mdp.codec, mdp.n_states, mdp.n_actions, ql));
    return run;
  }

  FqiConfig fc = pcfg.fqi;
  if (mcfg.ridge >= 0.0) fc.ridge = mcfg.ridge;
  if (m == Method::PDS) {
    const auto features = models.features;
    const int d = features->dim();
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd X(data.n_labeled(), d);
    for (long i = 0; i < data.n_labeled(); ++i)
      X.row(i) = (*features)(data.labeled[static_cast<std::size_t>(i)].s,
                             data.labeled[static_cast<std::size_t>(i)].a)
                     .transpose();
    lambda = X.transpose() * X;
    lambda.diagonal().array() += mcfg.ridge >= 0.0 ? mcfg.ridge : default_ridge(X);
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    const double beta = mcfg.pds_beta;
    const double v_max = fc.v_max;
    fc.target_penalty = [features, llt, beta, v_max](const Vec2& s, int a) {
      Eigen::VectorXd g = (*features)(s, a);
      return beta * v_max * std::sqrt(std::max(0.0, g.dot(llt.solve(g))));
    };
  }
  run.policy = greedy_policy(fqi(build.train, models.features, fc));
  return run;
}

}  // namespace spl
