// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/channel.hpp"
#include "spikacom/snn.hpp"

#include <vector>

namespace spikacom::est {

using chan::CMatrix;
using chan::cd;
using chan::CVector;
using chan::OfdmGridSpec;

/// H[p] = Y[p] / X[p]. Throws ArgumentError on a zero pilot symbol.
CVector ls_estimate(std::span<const cd> y_pilots, std::span<const cd> x_pilots);

/// Grid values at the pilot positions, in pilot order.
CVector pilot_values(const CMatrix& grid, const OfdmGridSpec& spec);
/// Row-major (subcarrier * n_sym + symbol) vectorisation of a grid and its inverse.
Eigen::VectorXcd vectorize(const CMatrix& grid);
CMatrix unvectorize(const Eigen::VectorXcd& v, const OfdmGridSpec& spec);

struct RbfConfig {
  double gamma = 0.1;
  double alpha = 1.0;  // symbol-axis scale
  double beta = 1.0;   // subcarrier-axis scale
};

/// Gaussian RBF interpolation through the pilot estimates; Phi^-1 is computed once per pattern.
class RbfInterpolator {
 public:
  RbfInterpolator(OfdmGridSpec spec, RbfConfig cfg = {});
  CMatrix apply(std::span<const cd> pilot_estimates) const;
  const Eigen::MatrixXd& kernel_inverse() const { return phi_inv_; }
  const OfdmGridSpec& spec() const { return spec_; }

 private:
  double kernel(std::size_t sc_a, std::size_t sym_a, std::size_t sc_b, std::size_t sym_b) const;

  OfdmGridSpec spec_;
  RbfConfig cfg_;
  Eigen::MatrixXd phi_inv_;
  Eigen::MatrixXd eval_;  // N_tot x N_p kernel matrix times Phi^-1
};

struct LmmseFilter {
  OfdmGridSpec spec;
  CMatrix a;     // N_tot x N_p
  CMatrix r_hp;  // N_tot x N_p
  CMatrix r_pp;  // N_p x N_p
  double noise = 0.0;
};

/// A = R_hp (R_pp + sigma^2 I)^-1 from empirical correlations of the training grids.
/// With sigma^2 = 0 the pseudo-inverse of R_pp is used.
LmmseFilter lmmse_fit(const std::vector<CMatrix>& training, const OfdmGridSpec& spec, double noise_power);
/// Filter from known correlations.
LmmseFilter lmmse_from_stats(const OfdmGridSpec& spec, CMatrix r_hp, CMatrix r_pp, double noise_power);
CMatrix lmmse_apply(const LmmseFilter& f, std::span<const cd> pilot_ls);

/// Mean squared complex error over the grid.
double mse(const CMatrix& estimate, const CMatrix& truth);

struct SnnResNetConfig {
  std::size_t channels = 16;
  std::size_t blocks = 2;
  std::size_t t_steps = 4;
  /// Residual rank; 0 means N_tot / 2.
  std::size_t rank = 0;
  snn::LifParams lif{};
  double input_scale = 1.0;
};

/// Spiking conv blocks over the pilot lattice, an FC up-sampling read-out to the full grid,
/// plus a complex low-rank residual A_L (A_R h_p).
class SnnResNet {
 public:
  SnnResNet(OfdmGridSpec spec, SnnResNetConfig cfg, std::uint64_t seed);

  const OfdmGridSpec& spec() const { return spec_; }
  const SnnResNetConfig& config() const { return cfg_; }
  snn::Network& network() { return net_; }
  const snn::Network& network() const { return net_; }
  std::size_t rank() const { return rank_; }
  /// Conv layer indices in gate order and their gate sizes.
  std::vector<std::size_t> gate_layers() const;
  std::vector<std::size_t> gate_sizes() const;
  std::vector<dg::Parameter*> parameters();

  /// (B, 2, rows, cols) image of pilot estimates on the pilot lattice.
  dg::Tensor encode(const std::vector<CVector>& pilots) const;

  struct Output {
    dg::Var grid;      // (B, 2 N_tot): real parts then imaginary parts, row-major grid order
    dg::Var residual;  // same layout, residual path only
    snn::Trace trace;
  };
  Output forward(dg::Tape& tape, const std::vector<CVector>& pilots, const snn::GateSet& gates = {}) const;
  CMatrix estimate(const CVector& pilots, const snn::GateSet& gates = {}) const;

  dg::Parameter a_l_re, a_l_im, a_r_re, a_r_im;

 private:
  OfdmGridSpec spec_;
  SnnResNetConfig cfg_;
  std::size_t rows_ = 0, cols_ = 0, rank_ = 0;
  std::vector<std::size_t> cell_of_pilot_;
  snn::Network net_;
};

/// (B, 2 N_tot) target tensor in the SnnResNet output layout.
dg::Tensor grid_targets(const std::vector<CMatrix>& grids);
CMatrix grid_from_row(const dg::Tensor& out, std::size_t row, const OfdmGridSpec& spec);

}  // namespace spikacom::est
