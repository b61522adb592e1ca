#include "spl/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spl {

namespace {

constexpr std::uint64_t kRffTag = 0xfea1;
constexpr std::uint64_t kBandwidthTag = 0xfea2;

Eigen::VectorXd rff_input(const Vec2& s, int a, int n_actions) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 + n_actions);
  x[0] = s[0];
  x[1] = s[1];
  x[2 + a] = 1.0;
  return x;
}

}  // namespace

FeatureMap FeatureMap::rff(int d, double bandwidth, int n_actions, std::uint64_t seed) {
  if (d <= 0 || n_actions <= 0) throw std::invalid_argument("rff: dimensions must be positive");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("rff: bandwidth must be positive");
  FeatureMap f;
  f.kind_ = FeatureKind::Rff;
  f.d_ = d;
  f.n_actions_ = n_actions;
  f.seed_ = seed;
  f.bandwidth_ = bandwidth;
  Rng rng(seed_stream(seed, kRffTag));
  const int in_dim = 2 + n_actions;
  f.omega_.resize(d, in_dim);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < in_dim; ++j) f.omega_(i, j) = draw_normal(rng, 0.0, 1.0 / bandwidth);
  f.phase_.resize(d);
  for (int i = 0; i < d; ++i) f.phase_[i] = 2.0 * M_PI * draw_uniform(rng);
  return f;
}

FeatureMap FeatureMap::rff_median_bandwidth(int d, int n_actions, const OfflineDataset& data,
                                            std::uint64_t seed) {
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(static_cast<std::size_t>(data.n_total()));
  for (const auto& u : data.labeled) xs.push_back(rff_input(u.s, u.a, n_actions));
  for (const auto& u : data.unlabeled) xs.push_back(rff_input(u.s, u.a, n_actions));
  if (xs.size() < 2) throw std::invalid_argument("rff_median_bandwidth: need at least two tuples");

  Rng rng(seed_stream(seed, kBandwidthTag));
  const int n = static_cast<int>(xs.size());
  std::vector<double> dist;
  dist.reserve(1000);
  for (int k = 0; k < 1000; ++k) {
    int i = draw_index(rng, n), j = draw_index(rng, n - 1);
    if (j >= i) ++j;
    dist.push_back((xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)]).norm());
  }
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  double med = dist[dist.size() / 2];
  return rff(d, med > 0.0 ? med : 1.0, n_actions, seed);
}

FeatureMap FeatureMap::poly2() {
  FeatureMap f;
  f.kind_ = FeatureKind::Poly2;
  f.d_ = 9;
  f.n_actions_ = 3;
  return f;
}

FeatureMap FeatureMap::tabular_onehot(const StateCodec& codec, int n_states, int n_actions,
                                      std::string codec_name) {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("tabular_onehot: dimensions must be positive");
  FeatureMap f;
  f.kind_ = FeatureKind::TabularOneHot;
  f.d_ = n_states * n_actions;
  f.n_actions_ = n_actions;
  f.n_states_ = n_states;
  f.codec_ = codec;
  f.codec_name_ = std::move(codec_name);
  return f;
}

Eigen::VectorXd FeatureMap::operator()(const Vec2& s, int a) const {
  if (a < 0 || a >= n_actions_) throw std::out_of_range("feature map: action index out of range");
  switch (kind_) {
    case FeatureKind::Rff: {
      Eigen::VectorXd z = omega_ * rff_input(s, a, n_actions_) + phase_;
      return std::sqrt(2.0 / static_cast<double>(d_)) * z.array().cos().matrix();
    }
    case FeatureKind::Poly2: {
      // actions -1/0/+1 encoded as (a1, a2) = (1,0)/(0,0)/(0,1)
      double a1 = a == 0 ? 1.0 : 0.0;
      double a2 = a == 2 ? 1.0 : 0.0;
      Eigen::VectorXd g(9);
      g << s[0], s[1], s[0] * s[0], s[1] * s[1], s[0] * s[1], a1 * s[0], a1 * s[1], a2 * s[0],
          a2 * s[1];
      return g;
    }
    case FeatureKind::TabularOneHot: {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d_);
      g[codec_.to_index(s) * n_actions_ + a] = 1.0;
      return g;
    }
  }
  throw std::logic_error("feature map: unknown kind");
}

void FeatureMap::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const char* kind_name =
      kind_ == FeatureKind::Rff ? "rff" : (kind_ == FeatureKind::Poly2 ? "poly2" : "tabular_onehot");
  out << "kind,d,n_actions,seed,bandwidth,n_states,codec\n";
  out << kind_name << ',' << d_ << ',' << n_actions_ << ',' << seed_ << ','
      << fmt_double(bandwidth_) << ',' << n_states_ << ',' << codec_name_ << '\n';
  if (kind_ == FeatureKind::Rff) {
    for (int i = 0; i < omega_.rows(); ++i) {
      for (int j = 0; j < omega_.cols(); ++j) out << (j ? "," : "") << fmt_double(omega_(i, j));
      out << '\n';
    }
    for (int i = 0; i < phase_.size(); ++i) out << (i ? "," : "") << fmt_double(phase_[i]);
    out << '\n';
  }
}

FeatureMap FeatureMap::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  std::getline(in, line);  // header
  if (!std::getline(in, line)) throw std::runtime_error("feature map file truncated: " + path);
  std::stringstream ss(line);
  std::string kind, cell;
  std::vector<std::string> f;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() < 7) throw std::runtime_error("feature map file malformed: " + path);
  kind = f[0];
  int d = std::stoi(f[1]), n_actions = std::stoi(f[2]);
  std::uint64_t seed = std::stoull(f[3]);
  double bandwidth = std::stod(f[4]);
  int n_states = std::stoi(f[5]);
  const std::string codec_name = f[6];

  if (kind == "poly2") return poly2();
  if (kind == "tabular_onehot") {
    StateCodec codec = StateCodec::identity();
    if (codec_name.rfind("grid-", 0) == 0) codec = StateCodec::grid(std::stoi(codec_name.substr(5)));
    return tabular_onehot(codec, n_states, n_actions, codec_name);
  }
  if (kind != "rff") throw std::runtime_error("feature map kind unknown: " + kind);

  FeatureMap fm = rff(d, bandwidth, n_actions, seed);
  // stored rows are authoritative; reread them rather than trusting the seed
  for (int i = 0; i < d; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("feature map file truncated: " + path);
    std::stringstream row(line);
    for (int j = 0; j < fm.omega_.cols(); ++j) {
      std::getline(row, cell, ',');
      fm.omega_(i, j) = std::stod(cell);
    }
  }
  if (!std::getline(in, line)) throw std::runtime_error("feature map file truncated: " + path);
  std::stringstream row(line);
  for (int i = 0; i < d; ++i) {
    std::getline(row, cell, ',');
    fm.phase_[i] = std::stod(cell);
  }
  return fm;
}

}  // namespace spl
