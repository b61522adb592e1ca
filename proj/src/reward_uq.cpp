#include "spl/reward_uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace spl {

namespace {

constexpr std::uint64_t kTreeTag = 0x7e00;
constexpr double kMaxCondition = 1e12;

Eigen::VectorXd raw_coords(const Vec2& s, int a) {
  Eigen::VectorXd x(3);
  x << s[0], s[1], static_cast<double>(a);
  return x;
}

}  // namespace

double default_ridge(const Eigen::MatrixXd& X) {
  return 1e-8 * X.squaredNorm() / static_cast<double>(X.cols());
}

double OlsFit::halfwidth(const Eigen::VectorXd& g) const {
  double q = g.dot(sandwich * g);
  return std::sqrt(std::max(0.0, q) / static_cast<double>(n));
}

OlsFit fit_ols_sandwich(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double ridge) {
  const long n = X.rows();
  const long d = X.cols();
  if (n == 0 || d == 0) throw std::invalid_argument("fit_ols_sandwich: empty design");
  if (y.size() != n) throw std::invalid_argument("fit_ols_sandwich: target length mismatch");
  if (ridge < 0.0) throw std::invalid_argument("fit_ols_sandwich: negative ridge");

  Eigen::MatrixXd G = X.transpose() * X;
  G.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > kMaxCondition)
    throw std::runtime_error("rank-deficient design; increase ridge");

  Eigen::LLT<Eigen::MatrixXd> llt(G);
  OlsFit fit;
  fit.theta = llt.solve(X.transpose() * y);
  fit.n = n;
  fit.ridge = ridge;

  Eigen::VectorXd resid = y - X * fit.theta;
  Eigen::MatrixXd meat = X.transpose() * resid.array().square().matrix().asDiagonal() * X;
  Eigen::MatrixXd bread = llt.solve(Eigen::MatrixXd::Identity(d, d));
  fit.sandwich = static_cast<double>(n) * bread * meat * bread;
  return fit;
}

void BaggedTrees::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const TreeEnsembleConfig& cfg) {
  const int n = static_cast<int>(X.rows());
  if (n == 0) throw std::invalid_argument("bagged trees: empty training set");
  if (y.size() != n) throw std::invalid_argument("bagged trees: target length mismatch");
  if (cfg.n_trees <= 0 || cfg.min_leaf <= 0 || cfg.max_depth < 0)
    throw std::invalid_argument("bagged trees: bad config");

  train_x_ = X;
  trees_.assign(static_cast<std::size_t>(cfg.n_trees), {});
  in_bag_.assign(static_cast<std::size_t>(cfg.n_trees), std::vector<char>(n, 0));

  struct Builder {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    const TreeEnsembleConfig& cfg;
    Tree& tree;

    int build(std::vector<int>& rows, int lo, int hi, int depth) {
      double sum = 0.0, sumsq = 0.0;
      for (int k = lo; k < hi; ++k) {
        double v = y[rows[static_cast<std::size_t>(k)]];
        sum += v;
        sumsq += v * v;
      }
      const int m = hi - lo;
      const double mean = sum / m;
      const double sse = sumsq - sum * mean;
      const int node = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({-1, 0.0, -1, -1, mean});
      if (depth >= cfg.max_depth || m < 2 * cfg.min_leaf || sse <= 1e-12) return node;

      int best_f = -1;
      double best_thresh = 0.0, best_sse = sse - 1e-12;
      const int p = static_cast<int>(X.cols());
      std::vector<std::pair<double, double>> col(static_cast<std::size_t>(m));
      for (int f = 0; f < p; ++f) {
        for (int k = 0; k < m; ++k) {
          int r = rows[static_cast<std::size_t>(lo + k)];
          col[static_cast<std::size_t>(k)] = {X(r, f), y[r]};
        }
        std::sort(col.begin(), col.end());
        double lsum = 0.0, lsq = 0.0, rsum = sum, rsq = sumsq;
        for (int k = 0; k + 1 < m; ++k) {
          double v = col[static_cast<std::size_t>(k)].second;
          lsum += v;
          lsq += v * v;
          rsum -= v;
          rsq -= v * v;
          if (col[static_cast<std::size_t>(k)].first == col[static_cast<std::size_t>(k + 1)].first)
            continue;
          int nl = k + 1, nr = m - nl;
          if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
          double s = (lsq - lsum * lsum / nl) + (rsq - rsum * rsum / nr);
          if (s < best_sse) {
            best_sse = s;
            best_f = f;
            best_thresh = 0.5 * (col[static_cast<std::size_t>(k)].first +
                                 col[static_cast<std::size_t>(k + 1)].first);
          }
        }
      }
      if (best_f < 0) return node;

      auto mid = std::stable_partition(
          rows.begin() + lo, rows.begin() + hi,
          [&](int r) { return X(r, best_f) <= best_thresh; });
      const int cut = static_cast<int>(mid - rows.begin());
      if (cut == lo || cut == hi) return node;  // numeric guard; should not happen

      tree.nodes[static_cast<std::size_t>(node)].feature = best_f;
      tree.nodes[static_cast<std::size_t>(node)].threshold = best_thresh;
      int left = build(rows, lo, cut, depth + 1);
      tree.nodes[static_cast<std::size_t>(node)].left = left;
      int right = build(rows, cut, hi, depth + 1);
      tree.nodes[static_cast<std::size_t>(node)].right = right;
      return node;
    }
  };

  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(seed_stream(cfg.seed, kTreeTag + static_cast<std::uint64_t>(t)));
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(n));
    if (cfg.bootstrap) {
      for (int i = 0; i < n; ++i) {
        int r = draw_index(rng, n);
        rows.push_back(r);
        in_bag_[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)] = 1;
      }
    } else {
      rows.resize(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
      std::fill(in_bag_[static_cast<std::size_t>(t)].begin(),
                in_bag_[static_cast<std::size_t>(t)].end(), 1);
    }
    Builder b{train_x_, y, cfg, trees_[static_cast<std::size_t>(t)]};
    b.build(rows, 0, n, 0);
  }
}

double BaggedTrees::predict_tree(const Tree& t, const Eigen::VectorXd& x) const {
  int node = 0;
  while (t.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& nd = t.nodes[static_cast<std::size_t>(node)];
    node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return t.nodes[static_cast<std::size_t>(node)].value;
}

double BaggedTrees::predict(const Eigen::VectorXd& x) const {
  if (trees_.empty()) throw std::logic_error("bagged trees: not fitted");
  double sum = 0.0;
  for (const auto& t : trees_) sum += predict_tree(t, x);
  return sum / static_cast<double>(trees_.size());
}

Eigen::VectorXd BaggedTrees::training_predictions() const {
  Eigen::VectorXd out(train_x_.rows());
  for (int i = 0; i < train_x_.rows(); ++i) out[i] = predict(train_x_.row(i).transpose());
  return out;
}

Eigen::VectorXd BaggedTrees::oob_training_predictions() const {
  Eigen::VectorXd out(train_x_.rows());
  for (int i = 0; i < train_x_.rows(); ++i) {
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      if (in_bag_[t][static_cast<std::size_t>(i)]) continue;
      sum += predict_tree(trees_[t], train_x_.row(i).transpose());
      ++cnt;
    }
    out[i] = cnt > 0 ? sum / cnt : predict(train_x_.row(i).transpose());
  }
  return out;
}

double PessimisticRewardModel::r_hat(const Vec2& s, int a) const {
  return theta.dot((*features)(s, a));
}

double PessimisticRewardModel::delta(const Vec2& s, int a) const {
  Eigen::VectorXd g = (*features)(s, a);
  double q = g.dot(sigma_l * g) / static_cast<double>(n_l);
  if (mode == Mode::Suq && n_u > 0 && sigma_u.size() > 0)
    q += g.dot(sigma_u * g) / static_cast<double>(n_u);
  return std::sqrt(std::max(0.0, q));
}

PessimisticRewardModel::Prediction PessimisticRewardModel::predict(const Vec2& s, int a) const {
  Prediction p;
  p.r_hat = r_hat(s, a);
  p.delta = delta(s, a);
  p.r_pess = std::clamp(p.r_hat - z * p.delta, -r_max, r_max);
  return p;
}

void PessimisticRewardModel::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const long d = theta.size();
  out << "mode,d,n_l,n_u,alpha,z,r_max\n"
      << (mode == Mode::Suq ? "suq" : "ini") << ',' << d << ',' << n_l << ',' << n_u << ','
      << fmt_double(alpha) << ',' << fmt_double(z) << ',' << fmt_double(r_max) << '\n';
  auto emit_matrix = [&](const Eigen::MatrixXd& m) {
    for (long i = 0; i < m.rows(); ++i) {
      for (long j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt_double(m(i, j));
      out << '\n';
    }
  };
  for (long i = 0; i < d; ++i) out << (i ? "," : "") << fmt_double(theta[i]);
  out << '\n';
  emit_matrix(sigma_l);
  if (mode == Mode::Suq) emit_matrix(sigma_u);
}

namespace {

struct DesignBlock {
  Eigen::MatrixXd X;
  Eigen::MatrixXd coords;
};

DesignBlock labeled_design(const OfflineDataset& data, const FeatureMap& features) {
  const long n = data.n_labeled();
  DesignBlock b;
  b.X.resize(n, features.dim());
  b.coords.resize(n, 3);
  for (long i = 0; i < n; ++i) {
    const auto& u = data.labeled[static_cast<std::size_t>(i)];
    b.X.row(i) = features(u.s, u.a).transpose();
    b.coords.row(i) = raw_coords(u.s, u.a).transpose();
  }
  return b;
}

}  // namespace

PessimisticRewardModel suq_fit(const OfflineDataset& data, std::shared_ptr<const FeatureMap> features,
                               const SuqConfig& cfg) {
  const long n_l = data.n_labeled();
  const long n_u = data.n_unlabeled();
  if (n_l == 0) throw std::invalid_argument("suq_fit: no labeled tuples");
  if (n_u == 0) throw std::invalid_argument("suq_fit: no unlabeled tuples; use ini_fit");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("suq_fit: alpha out of range");

  DesignBlock lab = labeled_design(data, *features);
  Eigen::VectorXd y(n_l);
  for (long i = 0; i < n_l; ++i) y[i] = data.labeled[static_cast<std::size_t>(i)].r;

  // auxiliary predictions on both slices
  std::shared_ptr<BaggedTrees> forest;
  Eigen::VectorXd f_l(n_l);
  if (cfg.aux_override) {
    for (long i = 0; i < n_l; ++i) {
      const auto& u = data.labeled[static_cast<std::size_t>(i)];
      f_l[i] = cfg.aux_override(u.s, u.a);
    }
  } else {
    forest = std::make_shared<BaggedTrees>();
    forest->fit(lab.coords, y, cfg.aux);
    f_l = cfg.oob_residuals ? forest->oob_training_predictions() : forest->training_predictions();
  }

  Eigen::MatrixXd X_u(n_u, features->dim());
  Eigen::VectorXd f_u(n_u);
  for (long i = 0; i < n_u; ++i) {
    const auto& u = data.unlabeled[static_cast<std::size_t>(i)];
    X_u.row(i) = (*features)(u.s, u.a).transpose();
    f_u[i] = cfg.aux_override ? cfg.aux_override(u.s, u.a) : forest->predict(raw_coords(u.s, u.a));
  }

  const double ridge_l = cfg.ridge >= 0.0 ? cfg.ridge : default_ridge(lab.X);
  const double ridge_u = cfg.ridge >= 0.0 ? cfg.ridge : default_ridge(X_u);
  OlsFit fit_l = fit_ols_sandwich(y - f_l, lab.X, ridge_l);
  OlsFit fit_u = fit_ols_sandwich(f_u, X_u, ridge_u);

  PessimisticRewardModel m;
  m.mode = PessimisticRewardModel::Mode::Suq;
  m.theta = fit_l.theta + fit_u.theta;
  m.sigma_l = fit_l.sandwich;
  m.sigma_u = fit_u.sandwich;
  m.n_l = n_l;
  m.n_u = n_u;
  m.alpha = cfg.alpha;
  m.z = normal_quantile(1.0 - cfg.alpha / 2.0);
  m.r_max = cfg.r_max;
  m.features = std::move(features);
  m.aux = forest;
  return m;
}

PessimisticRewardModel ini_fit(const OfflineDataset& data, std::shared_ptr<const FeatureMap> features,
                               double alpha, double ridge, double r_max) {
  const long n_l = data.n_labeled();
  if (n_l == 0) throw std::invalid_argument("ini_fit: no labeled tuples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ini_fit: alpha out of range");

  DesignBlock lab = labeled_design(data, *features);
  Eigen::VectorXd y(n_l);
  for (long i = 0; i < n_l; ++i) y[i] = data.labeled[static_cast<std::size_t>(i)].r;

  OlsFit fit = fit_ols_sandwich(y, lab.X, ridge >= 0.0 ? ridge : default_ridge(lab.X));

  PessimisticRewardModel m;
  m.mode = PessimisticRewardModel::Mode::IniOnly;
  m.theta = fit.theta;
  m.sigma_l = fit.sandwich;
  m.n_l = n_l;
  m.n_u = 0;
  m.alpha = alpha;
  m.z = normal_quantile(1.0 - alpha / 2.0);
  m.r_max = r_max;
  m.features = std::move(features);
  return m;
}

TabularLcb tabular_reward_lcb(const OfflineDataset& data, const StateCodec& codec, int n_states,
                              int n_actions, double z) {
  if (data.labeled.empty()) throw std::invalid_argument("tabular_reward_lcb: no labeled tuples");
  TabularLcb t;
  t.z = z;
  t.count = Eigen::MatrixXd::Zero(n_states, n_actions);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n_states, n_actions);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(n_states, n_actions);
  double global_min = std::numeric_limits<double>::infinity(), global_sum = 0.0;
  for (const auto& u : data.labeled) {
    int s = codec.to_index(u.s);
    t.count(s, u.a) += 1.0;
    sum(s, u.a) += u.r;
    sumsq(s, u.a) += u.r * u.r;
    global_min = std::min(global_min, u.r);
    global_sum += u.r;
  }
  t.fallback_lcb = global_min;
  t.fallback_mean = global_sum / static_cast<double>(data.n_labeled());

  t.mean.resize(n_states, n_actions);
  t.sd.resize(n_states, n_actions);
  t.lcb.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double c = t.count(s, a);
      if (c == 0.0) {
        t.mean(s, a) = t.fallback_mean;
        t.sd(s, a) = 0.0;
        t.lcb(s, a) = t.fallback_lcb;
        continue;
      }
      double m = sum(s, a) / c;
      double var = std::max(0.0, sumsq(s, a) / c - m * m);  // population convention
      t.mean(s, a) = m;
      t.sd(s, a) = std::sqrt(var);
      t.lcb(s, a) = m - z * t.sd(s, a);
    }
  }
  return t;
}

OfflineDataset filter_by_uncertainty_quantile(const OfflineDataset& data,
                                              const PessimisticRewardModel& model, double q) {
  if (q < 0.0 || q > 1.0)
    throw std::invalid_argument("filter_by_uncertainty_quantile: q must lie in [0, 1]");
  const long n = data.n_unlabeled();
  if (n == 0) return data;

  std::vector<double> deltas(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const auto& u = data.unlabeled[static_cast<std::size_t>(i)];
    deltas[static_cast<std::size_t>(i)] = model.delta(u.s, u.a);
  }
  std::vector<double> sorted = deltas;
  std::sort(sorted.begin(), sorted.end());
  long k = static_cast<long>(std::ceil(q * static_cast<double>(n))) - 1;
  k = std::clamp(k, 0L, n - 1);
  const double threshold = sorted[static_cast<std::size_t>(k)];

  OfflineDataset out;
  out.seed = data.seed;
  out.labeled = data.labeled;
  out.labeled_episodes = data.labeled_episodes;
  for (const auto& ep : data.unlabeled_episodes) {
    int begin = static_cast<int>(out.unlabeled.size());
    for (int i = ep.begin; i < ep.end; ++i)
      if (deltas[static_cast<std::size_t>(i)] <= threshold)
        out.unlabeled.push_back(data.unlabeled[static_cast<std::size_t>(i)]);
    int end = static_cast<int>(out.unlabeled.size());
    if (end > begin) out.unlabeled_episodes.push_back({begin, end});
  }
  return out;
}

Eigen::MatrixXd pair_visit_counts(const OfflineDataset& data, const StateCodec& codec, int n_states,
                                  int n_actions) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (const auto& u : data.labeled) counts(codec.to_index(u.s), u.a) += 1.0;
  for (const auto& u : data.unlabeled) counts(codec.to_index(u.s), u.a) += 1.0;
  return counts;
}

std::vector<Eigen::MatrixXd> empirical_transition(const OfflineDataset& data, const StateCodec& codec,
                                                  int n_states, int n_actions) {
  std::vector<Eigen::MatrixXd> p(static_cast<std::size_t>(n_actions),
                                 Eigen::MatrixXd::Zero(n_states, n_states));
  auto add = [&](const Vec2& s, int a, const Vec2& sn) {
    p[static_cast<std::size_t>(a)](codec.to_index(s), codec.to_index(sn)) += 1.0;
  };
  for (const auto& u : data.labeled) add(u.s, u.a, u.s_next);
  for (const auto& u : data.unlabeled) add(u.s, u.a, u.s_next);
  for (auto& T : p) {
    for (int s = 0; s < n_states; ++s) {
      double c = T.row(s).sum();
      if (c > 0.0)
        T.row(s) /= c;
      else
        T.row(s).setConstant(1.0 / static_cast<double>(n_states));
    }
  }
  return p;
}

double taw_penalty(const std::vector<Eigen::MatrixXd>& p_hat, const std::vector<Eigen::MatrixXd>& p_true,
                   double gamma, double r_max, int s, int a) {
  if (p_hat.size() != p_true.size() || a < 0 || a >= static_cast<int>(p_hat.size()))
    throw std::invalid_argument("taw_penalty: shape mismatch");
  const double v_max = r_max / (1.0 - gamma);
  const double l1 = (p_hat[static_cast<std::size_t>(a)].row(s) - p_true[static_cast<std::size_t>(a)].row(s))
                        .cwiseAbs()
                        .sum();
  return gamma * v_max * l1;
}

double taw_penalty_bound(const Eigen::MatrixXd& visit_counts, double alpha, double gamma, double r_max,
                         int s, int a) {
  if (s < 0 || s >= visit_counts.rows() || a < 0 || a >= visit_counts.cols())
    throw std::invalid_argument("taw_penalty_bound: index out of range");
  const double v_max = r_max / (1.0 - gamma);
  const double n_states = static_cast<double>(visit_counts.rows());
  const double n = std::max(1.0, visit_counts(s, a));
  const double l1 = std::min(2.0, std::sqrt(2.0 * n_states * std::log(2.0 / alpha) / n));
  return gamma * v_max * l1;
}

}  // namespace spl
