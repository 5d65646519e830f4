// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/channel.hpp"
#include "spikacom/complex.hpp"
#include "spikacom/snn.hpp"

#include <vector>

namespace spikacom::bf {

using dg::CMatrix;

struct BfProblem {
  std::vector<CMatrix> h;      // K channels, each N_r x N_t
  std::vector<double> alpha;   // user weights
  std::vector<double> noise;   // sigma_k^2
  double power = 1.0;          // P_T
  std::size_t streams = 1;     // d

  std::size_t k() const { return h.size(); }
  std::size_t n_tx() const { return h.empty() ? 0 : static_cast<std::size_t>(h[0].cols()); }
  std::size_t n_rx() const { return h.empty() ? 0 : static_cast<std::size_t>(h[0].rows()); }
  void validate() const;

  /// Unit weights and a common noise power.
  static BfProblem uniform(std::vector<CMatrix> h, double power, double noise = 1.0, std::size_t streams = 0);
};

struct BfSolution {
  std::vector<CMatrix> v;  // K precoders, each N_t x d
  double power() const;
};

struct AuxVars {
  std::vector<CMatrix> u;  // N_r x d
  std::vector<CMatrix> w;  // d x d
};

/// Weighted sum rate in bits/s/Hz. Throws ArgumentError when the power budget is exceeded.
double sum_rate(const BfProblem& p, const BfSolution& s);
std::vector<double> user_rates(const BfProblem& p, const BfSolution& s);

/// Rescales to the budget when it is exceeded; leaves feasible solutions unchanged.
BfSolution project_power(BfSolution s, double power);
/// Rescales to exactly the budget (no-op for an all-zero solution).
BfSolution normalize_power(BfSolution s, double power);

/// Matched-filter start V_k = H_k^H (first d columns) scaled to the budget.
BfSolution matched_filter_init(const BfProblem& p);

/// Receive and weight updates for a given V.
AuxVars wmmse_aux(const BfProblem& p, const BfSolution& s);
/// Transmit update from (U, W); no power scaling.
BfSolution wmmse_v_update(const BfProblem& p, const AuxVars& aux);

struct WmmseResult {
  BfSolution solution;
  AuxVars aux;
  std::vector<double> trace;  // sum rate of the start point and after every iteration
  std::size_t iterations = 0;
};

/// Block-coordinate U, W, V updates; V is rescaled to the budget after each V step.
/// Stops when the sum-rate gain falls below `tol`.
WmmseResult wmmse_solve(const BfProblem& p, const BfSolution& init, std::size_t max_iters = 500, double tol = 1e-10);

/// Largest change of (U, W, V) after one more sweep from a solution, V compared at full power.
double wmmse_residual(const BfProblem& p, const BfSolution& s);

/// Single-user MIMO capacity with waterfilling over the eigenmodes of H^H H.
double waterfilling_capacity(const CMatrix& h, double power, double noise, std::size_t streams);

struct DkOptions {
  double epsilon = 1e-6;
};

/// Model-driven layer V_k = alpha_k B^-1 H_k^H U_k W_k with W conditioned to be Hermitian,
/// followed by projection onto the power ball. All-zero U gives V = 0.
BfSolution dk_layer(const BfProblem& p, const std::vector<CMatrix>& w_bar, const std::vector<CMatrix>& u_bar,
                    DkOptions opt = {});

/// Recorded DK layer on embedded complex matrices (see complex.hpp).
std::vector<dg::Var> dk_layer(dg::Tape& tape, const BfProblem& p, const std::vector<dg::Var>& w_bar,
                              const std::vector<dg::Var>& u_bar, DkOptions opt = {});
/// Recorded weighted sum rate of embedded precoders.
dg::Var sum_rate(dg::Tape& tape, const BfProblem& p, const std::vector<dg::Var>& v);

enum class Regularization { rzf, mmse };

/// Regularised zero forcing on the stacked channel, c = K sigma^2 / P_T (rzf) or
/// sum_k N_r sigma_k^2 / P_T (mmse); power set to exactly P_T.
BfSolution rzf_baseline(const BfProblem& p, Regularization reg = Regularization::rzf);
/// Same with an explicit regulariser c > 0.
BfSolution rzf_with(const BfProblem& p, double c);

struct BfNetConfig {
  std::size_t k_users = 2, n_tx = 8, n_rx = 2, streams = 2;
  std::size_t conv_channels = 36;
  std::size_t hidden = 3000;
  std::size_t t_steps = 4;
  snn::LifParams lif{};
  double input_scale = 1.0;
  DkOptions dk{};
};

/// Conv + FC spiking backbone whose time-averaged read-out is reshaped into (W_bar, U_bar)
/// and passed through the DK layer.
class SpikingBFNet {
 public:
  SpikingBFNet(BfNetConfig cfg, std::uint64_t seed);

  const BfNetConfig& config() const { return cfg_; }
  snn::Network& network() { return net_; }
  const snn::Network& network() const { return net_; }
  std::size_t output_size() const;
  /// Layer indices of the conv and FC layers, in gate order.
  std::vector<std::size_t> gate_layers() const { return {0, 2}; }
  std::vector<std::size_t> gate_sizes() const { return {cfg_.conv_channels, cfg_.hidden}; }

  /// (B, 2K, N_r, N_t) real image of a batch of channel sets.
  dg::Tensor encode(const std::vector<chan::ChannelSet>& batch) const;

  struct Output {
    std::vector<std::vector<dg::Var>> w_bar, u_bar, v;  // [sample][user], embedded
    dg::Var rate;                                        // mean sum rate over the batch
    snn::Trace trace;
  };
  Output forward(dg::Tape& tape, const std::vector<BfProblem>& problems, const snn::GateSet& gates = {}) const;

  /// Eager precoders for one problem.
  BfSolution solve(const BfProblem& p, const snn::GateSet& gates = {}) const;

 private:
  BfNetConfig cfg_;
  snn::Network net_;
};

}  // namespace spikacom::bf
