// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/distance.hpp"
#include "spikacom/snn.hpp"

#include <vector>

namespace spikacom::ctx {

struct HyperParams {
  double beta = 1.0;
  double lambda_h = 0.1;
  /// Gate length of every modulated layer; the hypernet emits their concatenation.
  std::vector<std::size_t> gate_sizes{32};
  /// Target active-gate count per layer; empty means half of each gate length.
  std::vector<double> rho;
  std::size_t hidden = 64;
  std::size_t feature_dim = 32;
  double threshold = 0.5;

  double rho_for(std::size_t layer) const;
  std::size_t total_gates() const;
};

/// Cosine-similarity target plus sparsity pull for one pair of relaxed gates.
/// Throws ArgumentError when either gate has zero norm.
double hypernet_loss(const dg::Tensor& g1, const dg::Tensor& g2, double fcd_value, const HyperParams& hp);

struct HypernetTrainConfig {
  std::size_t epochs = 1500;
  double lr = 5e-3;
  std::uint64_t seed = 0;
};

/// Maps a set of pilot observations to binary gates.
///
/// Pilot rows pass through the fixed feature map, are pooled to per-feature mean and
/// standard deviation, standardised with statistics of the training contexts, and fed
/// to a one-hidden-layer tanh MLP whose sigmoid outputs are the relaxed gates.
class Hypernet {
 public:
  Hypernet(std::size_t pilot_dim, HyperParams hp, std::uint64_t seed);

  const HyperParams& hyper() const { return hp_; }
  const FeatureMap& feature_map() const { return fmap_; }

  Eigen::VectorXd context(const Eigen::MatrixXd& pilots) const;
  /// Relaxed gates (sigmoid outputs) for a batch of contexts, recorded on `tape`.
  dg::Var relaxed(dg::Tape& tape, const Eigen::MatrixXd& contexts);
  Eigen::VectorXd soft_gates(const Eigen::MatrixXd& pilots) const;
  /// Hard gates split per modulated layer.
  std::vector<snn::GateVector> gates(const Eigen::MatrixXd& pilots) const;
  /// Concatenated hard gates.
  Eigen::VectorXd hard_gates(const Eigen::MatrixXd& pilots) const;

  /// Fixes the context standardisation from training contexts (rows).
  void set_normalization(const Eigen::MatrixXd& contexts);
  std::vector<dg::Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

  /// Recorded loss over all environment pairs: rows of `a` and `b` are gates from two
  /// independent pilot draws per environment; `target` is exp(-beta FCD).
  static dg::Var batch_loss(dg::Var a, dg::Var b, const Eigen::MatrixXd& target, const HyperParams& hp);

 private:
  HyperParams hp_;
  FeatureMap fmap_;
  Eigen::VectorXd ctx_mean_, ctx_scale_;
  dg::Parameter w1_, b1_, w2_, b2_;
};

/// Trains on pilot sets grouped by environment: env_pilots[e][s] is pilot set s of environment e
/// (at least two sets per environment). `fcd` is the pairwise FCD matrix of the environments.
Hypernet train_hypernet(const std::vector<std::vector<Eigen::MatrixXd>>& env_pilots, const Eigen::MatrixXd& fcd,
                        const HyperParams& hp, const HypernetTrainConfig& cfg);

/// Continues training an existing hypernet on new pilot sets; the context standardisation is kept.
void refine_hypernet(Hypernet& net, const std::vector<std::vector<Eigen::MatrixXd>>& env_pilots,
                     const Eigen::MatrixXd& fcd, const HypernetTrainConfig& cfg);

/// Cosine-distance matrix 1 - cos(g_i, g_j) between gate vectors (rows).
Eigen::MatrixXd gate_distance_matrix(const Eigen::MatrixXd& gates);

/// Normalised MSE between the gate cosine-distance matrix and 1 - exp(-beta FCD) over
/// off-diagonal entries.
double alignment_nmse(const Eigen::MatrixXd& gate_dist, const Eigen::MatrixXd& fcd, double beta);

}  // namespace spikacom::ctx
