#pragma once

#include <Eigen/Dense>
#include <string>

#include "spl/core_mdp.hpp"

namespace spl {

enum class FeatureKind { Rff, Poly2, TabularOneHot };

// State-action feature map g(s, a) in one of three flavors:
//  - rff: random cosine features of [s; onehot(a)] approximating a Gaussian
//    kernel with the stored bandwidth,
//  - poly2: the fixed 9-term degree-2 basis used with three signed actions,
//  - tabular_onehot: indicator of the (state index, action) pair.
class FeatureMap {
 public:
  static FeatureMap rff(int d, double bandwidth, int n_actions, std::uint64_t seed);
  // bandwidth from the median of 1000 sampled pairwise input distances
  static FeatureMap rff_median_bandwidth(int d, int n_actions, const OfflineDataset& data,
                                         std::uint64_t seed);
  static FeatureMap poly2();
  static FeatureMap tabular_onehot(const StateCodec& codec, int n_states, int n_actions,
                                   std::string codec_name = "identity");

  FeatureKind kind() const { return kind_; }
  int dim() const { return d_; }
  int n_actions() const { return n_actions_; }
  double bandwidth() const { return bandwidth_; }

  Eigen::VectorXd operator()(const Vec2& s, int a) const;

  void save_csv(const std::string& path) const;
  static FeatureMap load_csv(const std::string& path);

 private:
  FeatureMap() = default;

  FeatureKind kind_ = FeatureKind::Poly2;
  int d_ = 0;
  int n_actions_ = 0;
  std::uint64_t seed_ = 0;
  double bandwidth_ = 1.0;
  Eigen::MatrixXd omega_;   // rff projection, d x (2 + n_actions)
  Eigen::VectorXd phase_;   // rff offsets in [0, 2pi)
  int n_states_ = 0;        // tabular
  StateCodec codec_ = StateCodec::identity();
  std::string codec_name_ = "identity";
};

constexpr int kRffGridDim = 64;  // default width at grid scale

}  // namespace spl
