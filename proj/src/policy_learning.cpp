#include "spl/policy_learning.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spl/reward_uq.hpp"

namespace spl {

namespace {

constexpr std::uint64_t kQLearnTag = 0x41ea;
constexpr std::uint64_t kRolloutTag = 0x9b00;

double clip_mag(double v, double bound) { return std::clamp(v, -bound, bound); }

}  // namespace

double QFunction::value(const Vec2& s, int a) const {
  if (a < 0 || a >= n_actions) throw std::out_of_range("q function: action index out of range");
  double v = is_tabular() ? table(codec.to_index(s), a) : weights.dot((*features)(s, a));
  return clip_mag(v, v_max);
}

double QFunction::max_value(const Vec2& s) const {
  double best = value(s, 0);
  for (int a = 1; a < n_actions; ++a) best = std::max(best, value(s, a));
  return best;
}

int QFunction::greedy(const Vec2& s) const {
  int best_a = 0;
  double best = value(s, 0);
  for (int a = 1; a < n_actions; ++a) {
    double v = value(s, a);
    if (v > best) {  // ties stay on the lowest index
      best = v;
      best_a = a;
    }
  }
  return best_a;
}

void QFunction::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "kind,n_actions,gamma,v_max\n"
      << (is_tabular() ? "tabular" : "linear") << ',' << n_actions << ',' << fmt_double(gamma) << ','
      << fmt_double(v_max) << '\n';
  if (is_tabular()) {
    for (long s = 0; s < table.rows(); ++s) {
      for (long a = 0; a < table.cols(); ++a) out << (a ? "," : "") << fmt_double(table(s, a));
      out << '\n';
    }
  } else {
    for (long i = 0; i < weights.size(); ++i) out << (i ? "," : "") << fmt_double(weights[i]);
    out << '\n';
  }
}

Policy greedy_policy(QFunction q) {
  Policy pol;
  if (q.is_tabular()) {
    pol.probs = Eigen::MatrixXd::Zero(q.table.rows(), q.table.cols());
    for (long s = 0; s < q.table.rows(); ++s) pol.probs(s, q.greedy(q.codec.to_vec(static_cast<int>(s)))) = 1.0;
  }
  auto shared = std::make_shared<QFunction>(std::move(q));
  pol.act = [shared](const Vec2& s, Rng&) { return shared->greedy(s); };
  return pol;
}

QFunction value_iteration(const TabularMDP& mdp, const Eigen::MatrixXd& reward, double tol,
                          int max_iter) {
  mdp.validate();
  if (reward.rows() != mdp.n_states || reward.cols() != mdp.n_actions)
    throw std::invalid_argument("value_iteration: reward table shape mismatch");

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd vmax = q.rowwise().maxCoeff();
    Eigen::MatrixXd qn(mdp.n_states, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a)
      qn.col(a) = reward.col(a) + mdp.gamma * (mdp.transition[a] * vmax);
    residual = (qn - q).cwiseAbs().maxCoeff();
    q = std::move(qn);
    if (residual <= tol) {
      QFunction out;
      out.table = std::move(q);
      out.codec = mdp.codec;
      out.n_actions = mdp.n_actions;
      out.gamma = mdp.gamma;
      out.v_max = reward.cwiseAbs().maxCoeff() / (1.0 - mdp.gamma);
      return out;
    }
  }
  std::ostringstream os;
  os << "value_iteration: no convergence after " << max_iter << " iterations (residual " << residual
     << ")";
  throw std::runtime_error(os.str());
}

QFunction fqi(const TrainingSet& data, std::shared_ptr<const FeatureMap> features,
              const FqiConfig& cfg) {
  const long n = data.size();
  if (n == 0) throw std::invalid_argument("fqi: empty training set");
  if (!features) throw std::invalid_argument("fqi: feature map required");
  if (!data.weights.empty() && static_cast<long>(data.weights.size()) != n)
    throw std::invalid_argument("fqi: weight length mismatch");
  const int d = features->dim();
  const int n_acts = features->n_actions();

  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd r(n), sw(n), pen = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::MatrixXd> Xnext(static_cast<std::size_t>(n_acts), Eigen::MatrixXd(n, d));
  for (long i = 0; i < n; ++i) {
    const auto& u = data.tuples[static_cast<std::size_t>(i)];
    X.row(i) = (*features)(u.s, u.a).transpose();
    r[i] = u.r;
    sw[i] = std::sqrt(data.weights.empty() ? 1.0 : data.weights[static_cast<std::size_t>(i)]);
    if (cfg.target_penalty) pen[i] = cfg.target_penalty(u.s, u.a);
    for (int a = 0; a < n_acts; ++a)
      Xnext[static_cast<std::size_t>(a)].row(i) = (*features)(u.s_next, a).transpose();
  }

  const double ridge = cfg.ridge >= 0.0 ? cfg.ridge : default_ridge(X);
  Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  Eigen::MatrixXd G = Xw.transpose() * Xw;
  G.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  if (es.eigenvalues().minCoeff() <= 0.0 ||
      es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff() > 1e12)
    throw std::runtime_error("rank-deficient design; increase ridge");
  Eigen::LLT<Eigen::MatrixXd> llt(G);

  auto clip_vec = [&](Eigen::VectorXd v) {
    return v.array().min(cfg.v_max).max(-cfg.v_max).matrix();
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd q_prev = Eigen::VectorXd::Zero(n);
  for (int it = 0; it < cfg.max_iter; ++it) {
    Eigen::VectorXd qnext = clip_vec(Xnext[0] * w);
    for (int a = 1; a < n_acts; ++a)
      qnext = qnext.cwiseMax(clip_vec(Xnext[static_cast<std::size_t>(a)] * w));
    Eigen::VectorXd target = r - pen + cfg.gamma * qnext;
    w = llt.solve(Xw.transpose() * (sw.asDiagonal() * target));
    Eigen::VectorXd q_cur = clip_vec(X * w);
    double diff = (q_cur - q_prev).cwiseAbs().sum();
    double base = q_prev.cwiseAbs().sum();
    q_prev = std::move(q_cur);
    if (diff <= cfg.tol * base) break;
  }

  QFunction out;
  out.weights = std::move(w);
  out.features = std::move(features);
  out.n_actions = n_acts;
  out.gamma = cfg.gamma;
  out.v_max = cfg.v_max;
  return out;
}

QFunction tabular_q_learning(const TrainingSet& data, const StateCodec& codec, int n_states,
                             int n_actions, const QLearningConfig& cfg) {
  const long n = data.size();
  if (n == 0) throw std::invalid_argument("tabular_q_learning: empty training set");

  std::vector<int> si(static_cast<std::size_t>(n)), sn(static_cast<std::size_t>(n));
  Eigen::VectorXd pen = Eigen::VectorXd::Zero(n);
  for (long i = 0; i < n; ++i) {
    const auto& u = data.tuples[static_cast<std::size_t>(i)];
    si[static_cast<std::size_t>(i)] = codec.to_index(u.s);
    sn[static_cast<std::size_t>(i)] = codec.to_index(u.s_next);
    if (cfg.target_penalty) pen[i] = cfg.target_penalty(u.s, u.a);
  }

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n_states, n_actions);
  Rng rng(seed_stream(cfg.seed, kQLearnTag));
  for (long u = 0; u < cfg.n_updates; ++u) {
    long i = draw_index(rng, static_cast<int>(n));
    const auto& t = data.tuples[static_cast<std::size_t>(i)];
    double qmax = q.row(sn[static_cast<std::size_t>(i)]).maxCoeff();
    double target = t.r - pen[i] + cfg.gamma * qmax;
    double& cell = q(si[static_cast<std::size_t>(i)], t.a);
    cell = clip_mag(cell + cfg.lr * (target - cell), cfg.v_max);
  }

  QFunction out;
  out.table = std::move(q);
  out.codec = codec;
  out.n_actions = n_actions;
  out.gamma = cfg.gamma;
  out.v_max = cfg.v_max;
  return out;
}

Vec2 TransitionModel::predict_mean(const Vec2& s, int a) const {
  return A[static_cast<std::size_t>(a)] * s + b[static_cast<std::size_t>(a)];
}

Vec2 TransitionModel::sample(const Vec2& s, int a, Rng& rng) const {
  Vec2 m = predict_mean(s, a);
  const Vec2& c = cov_diag[static_cast<std::size_t>(a)];
  return Vec2(draw_normal(rng, m[0], std::sqrt(c[0])), draw_normal(rng, m[1], std::sqrt(c[1])));
}

TransitionModel fit_transition_model(const OfflineDataset& data, int n_actions) {
  std::vector<std::vector<const Vec2*>> s_by_a(static_cast<std::size_t>(n_actions));
  std::vector<std::vector<const Vec2*>> sn_by_a(static_cast<std::size_t>(n_actions));
  auto add = [&](const Vec2& s, int a, const Vec2& sn) {
    s_by_a[static_cast<std::size_t>(a)].push_back(&s);
    sn_by_a[static_cast<std::size_t>(a)].push_back(&sn);
  };
  for (const auto& u : data.labeled) add(u.s, u.a, u.s_next);
  for (const auto& u : data.unlabeled) add(u.s, u.a, u.s_next);

  TransitionModel m;
  m.A.resize(static_cast<std::size_t>(n_actions));
  m.b.resize(static_cast<std::size_t>(n_actions));
  m.cov_diag.resize(static_cast<std::size_t>(n_actions));
  for (int a = 0; a < n_actions; ++a) {
    const auto& ss = s_by_a[static_cast<std::size_t>(a)];
    const long n = static_cast<long>(ss.size());
    if (n < 3) {
      std::ostringstream os;
      os << "fit_transition_model: action " << a << " has only " << n << " transitions (need 3)";
      throw std::invalid_argument(os.str());
    }
    Eigen::MatrixXd X(n, 3), Y(n, 2);
    for (long i = 0; i < n; ++i) {
      X(i, 0) = (*ss[static_cast<std::size_t>(i)])[0];
      X(i, 1) = (*ss[static_cast<std::size_t>(i)])[1];
      X(i, 2) = 1.0;
      Y.row(i) = sn_by_a[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)]->transpose();
    }
    Eigen::MatrixXd beta = X.colPivHouseholderQr().solve(Y);  // 3 x 2
    m.A[static_cast<std::size_t>(a)] = beta.topRows<2>().transpose();
    m.b[static_cast<std::size_t>(a)] = beta.row(2).transpose();
    Eigen::MatrixXd resid = Y - X * beta;
    m.cov_diag[static_cast<std::size_t>(a)] =
        resid.array().square().colwise().mean().matrix().transpose();
  }
  return m;
}

StateProjection grid_projection(int side) {
  return [side](const Vec2& v) {
    auto snap = [side](double x) {
      return std::clamp(std::round(x), 0.0, static_cast<double>(side - 1));
    };
    return Vec2(snap(v[0]), snap(v[1]));
  };
}

StateProjection index_projection(int n_states) {
  return [n_states](const Vec2& v) {
    return Vec2(std::clamp(std::round(v[0]), 0.0, static_cast<double>(n_states - 1)), 0.0);
  };
}

TrainingSet model_rollout(const TransitionModel& model, const RewardFn& reward_fn,
                          const std::vector<Vec2>& starts, const Policy& policy, int horizon, Rng& rng,
                          const StateProjection& project) {
  if (horizon <= 0) throw std::invalid_argument("model_rollout: horizon must be positive");
  auto proj = [&](const Vec2& v) { return project ? project(v) : v; };
  TrainingSet out;
  out.tuples.reserve(starts.size() * static_cast<std::size_t>(horizon));
  for (const auto& start : starts) {
    Vec2 s = proj(start);
    for (int t = 0; t < horizon; ++t) {
      int a = policy.act(s, rng);
      double r = reward_fn(s, a);
      Vec2 sn = proj(model.sample(s, a, rng));
      out.tuples.push_back({s, a, r, sn});
      s = sn;
    }
  }
  return out;
}

MbSplResult mb_spl(const TrainingSet& real_data, const RewardFn& reward_fn,
                   const OfflineDataset& transitions, std::shared_ptr<const FeatureMap> features,
                   const MbSplConfig& cfg) {
  if (real_data.size() == 0) throw std::invalid_argument("mb_spl: empty training set");
  TransitionModel model = fit_transition_model(transitions, features->n_actions());

  std::vector<Vec2> pool;
  pool.reserve(static_cast<std::size_t>(transitions.n_total()));
  for (const auto& u : transitions.labeled) pool.push_back(u.s);
  for (const auto& u : transitions.unlabeled) pool.push_back(u.s);
  if (pool.empty()) throw std::invalid_argument("mb_spl: no start states");

  MbSplResult res;
  res.q.weights = Eigen::VectorXd::Zero(features->dim());
  res.q.features = features;
  res.q.n_actions = features->n_actions();
  res.q.gamma = cfg.fqi.gamma;
  res.q.v_max = cfg.fqi.v_max;

  std::vector<int> prev_actions;
  int stable = 0;
  for (int outer = 0; outer < cfg.outer_cap; ++outer) {
    res.outer_iterations = outer + 1;
    Rng rng(seed_stream(cfg.seed, kRolloutTag + static_cast<std::uint64_t>(outer)));
    std::vector<Vec2> starts(static_cast<std::size_t>(cfg.n_rollout_starts));
    for (auto& s : starts) s = pool[static_cast<std::size_t>(draw_index(rng, static_cast<int>(pool.size())))];

    TrainingSet combined = real_data;
    combined.weights.assign(static_cast<std::size_t>(real_data.size()), 1.0);
    TrainingSet synth = model_rollout(model, reward_fn, starts, greedy_policy(res.q),
                                      cfg.rollout_horizon, rng, cfg.project);
    for (auto& t : synth.tuples) {
      combined.tuples.push_back(t);
      combined.weights.push_back(cfg.synthetic_weight);
    }

    res.q = fqi(combined, features, cfg.fqi);

    std::vector<int> actions(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) actions[i] = res.q.greedy(pool[i]);
    stable = actions == prev_actions ? stable + 1 : 0;
    prev_actions = std::move(actions);
    if (stable >= cfg.stable_needed) {
      res.converged = true;
      break;
    }
  }
  res.policy = greedy_policy(res.q);
  return res;
}

}  // namespace spl
