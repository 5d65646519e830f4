// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace spikacom::ctx {

/// Mean and (biased, 1/N) covariance of a feature sample set.
struct GaussianSummary {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

/// Rows of `samples` are observations. Requires at least two rows.
GaussianSummary fit_gaussian(const Eigen::MatrixXd& samples);

/// Symmetric PSD square root; eigenvalues below 1e-12 are clipped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

/// Squared 2-Wasserstein distance between Gaussians:
/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double emd_gaussian(const GaussianSummary& a, const GaussianSummary& b);

/// Fixed random projection used as the feature map for channel samples.
///
/// f(x) = R x with R (d_out x d_in) drawn N(0, 1/d_in) from `seed`, so feature
/// magnitudes stay comparable to the input scale for any d_in.
class FeatureMap {
 public:
  FeatureMap() = default;  // identity
  FeatureMap(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

  bool identity() const { return proj_.size() == 0; }
  std::size_t d_in() const { return static_cast<std::size_t>(proj_.cols()); }
  std::size_t d_out() const { return static_cast<std::size_t>(proj_.rows()); }
  /// Maps each row of `x`.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  const Eigen::MatrixXd& matrix() const { return proj_; }

 private:
  Eigen::MatrixXd proj_;
};

/// Frechet channel distance between two sample sets (rows are samples).
double fcd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FeatureMap& f = {});

/// Relative distance |sqrt(1 + snr_a) - sqrt(1 + snr_b)| with SNRs given in dB.
double model_based_emd(double snr_a_db, double snr_b_db);

struct Assignment {
  std::vector<std::size_t> col_of_row;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method, O(n^3)).
Assignment hungarian(const Eigen::MatrixXd& cost);

/// Permutation-invariant FCD between two multi-user environments: users are matched by
/// minimum total pairwise FCD and the matched distances are averaged.
double multiuser_fcd(const std::vector<Eigen::MatrixXd>& env_a, const std::vector<Eigen::MatrixXd>& env_b,
                     const FeatureMap& f = {});

/// Pairwise FCD matrix over environments (symmetric by construction, zero diagonal).
Eigen::MatrixXd fcd_matrix(const std::vector<Eigen::MatrixXd>& envs, const FeatureMap& f = {});

}  // namespace spikacom::ctx
