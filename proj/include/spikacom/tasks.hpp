// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/harness.hpp"
#include "spikacom/beamforming.hpp"
#include "spikacom/estimation.hpp"
#include "spikacom/semantic.hpp"

namespace spikacom::harness {

/// Hypernet pre-training sweep: gains from `hi` down to `lo` dB in `step` dB decrements.
std::vector<double> gain_sweep(double hi = 8.0, double lo = -20.0, double step = 2.0);

/// Binary gates keeping a random half of every layer.
Gates random_gates(const std::vector<std::size_t>& sizes, Rng& rng);

struct SemanticTaskConfig {
  sem::DatasetConfig data{};
  sem::SemanticConfig model{};
  sem::EncoderPretrain pretrain{};
  std::vector<double> gains_db{8.0, 0.0, -8.0, -16.0};
  std::size_t taps = 3;
  double decay = 0.8;
  double noise_power = 1.0;
  /// Epochs of channel encoder and decoder training over an ideal link before the sequence starts.
  std::size_t warmup_epochs = 3;
  double warmup_lr = 3e-3;
  /// Fraction of warm-up batches run under random gates that keep half of each gated layer,
  /// so that any gated sub-network starts from a working model.
  double warmup_gate_fraction = 0.5;
  std::vector<double> sweep_db = gain_sweep();
  /// Gains between the sweep points, for the hypernet generalisation check.
  std::vector<double> heldout_db{7.0, 3.0, -1.0, -5.0, -9.0, -13.0, -17.0, -19.0};
  std::size_t pilot_obs = 64;
  double pilot_rho = 0.5;
  void validate() const;
};

/// Classification of synthetic event streams sent over OOK links of decreasing gain.
class SemanticTask : public Task {
 public:
  SemanticTask(SemanticTaskConfig cfg, std::uint64_t seed);

  TaskKind kind() const override { return TaskKind::semantic; }
  std::size_t n_envs() const override { return cfg_.gains_db.size(); }
  bool lower_is_better() const override { return false; }
  std::vector<const snn::Network*> networks() const override;
  std::vector<dg::Parameter*> parameters() const override { return pipe_->adaptable_parameters(); }
  std::vector<std::size_t> gate_sizes() const override { return pipe_->gate_sizes(); }
  std::size_t train_size(std::size_t) const override { return train_cache_.size(); }
  StepOut loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
               Rng& rng) const override;
  double evaluate(std::size_t env, const Gates& gates, Rng& rng) const override;
  Eigen::MatrixXd pilots(std::size_t env, Rng& rng) const override;
  std::vector<std::vector<Eigen::MatrixXd>> sweep_pilots(std::size_t sets, Rng& rng) const override;
  std::vector<Eigen::MatrixXd> sweep_pooled(std::size_t rows, Rng& rng) const override;
  std::size_t n_heldout() const override;
  Eigen::MatrixXd heldout_pilots(std::size_t h, Rng& rng) const override;
  Eigen::MatrixXd heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const override;
  std::vector<NetTrace> probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng& rng) const override;
  void reset() override;

  const SemanticTaskConfig& config() const { return cfg_; }
  sem::SemanticPipeline& pipeline() { return *pipe_; }
  const sem::SemanticPipeline& pipeline() const { return *pipe_; }
  const sem::EventDataset& dataset() const { return data_; }
  const std::vector<dg::Tensor>& test_features() const { return test_cache_; }
  chan::MultipathProfile profile(double gain_db) const;
  double encoder_accuracy() const { return encoder_acc_; }

 private:
  SemanticTaskConfig cfg_;
  sem::EventDataset data_;
  std::unique_ptr<sem::SemanticPipeline> pipe_;
  std::vector<dg::Tensor> train_cache_, test_cache_;
  std::vector<dg::Tensor> initial_;
  double encoder_acc_ = 0.0;
};

struct BeamformingTaskConfig {
  bf::BfNetConfig net{.k_users = 2, .n_tx = 8, .n_rx = 2, .streams = 2, .conv_channels = 16, .hidden = 256};
  /// Location-block indices of the environments, in training order.
  std::vector<std::uint64_t> blocks{0, 1, 2, 3};
  /// Blocks of the hypernet pre-training sweep.
  std::vector<std::uint64_t> sweep_blocks{100, 101, 102, 103, 104, 105, 106, 107, 108, 109, 110, 111};
  std::vector<std::uint64_t> heldout_blocks{200, 201, 202, 203, 204, 205, 206, 207};
  std::size_t n_train = 512;
  std::size_t n_test = 128;
  double power = 1.0;
  double noise = 1.0;
  /// Channel draws per pilot set (each contributes one row per user).
  std::size_t pilot_draws = 32;
  void validate() const;
};

/// Multi-user MIMO precoding over a sequence of user-location environments; metric is sum rate.
class BeamformingTask : public Task {
 public:
  BeamformingTask(BeamformingTaskConfig cfg, std::uint64_t seed);

  TaskKind kind() const override { return TaskKind::beamforming; }
  std::size_t n_envs() const override { return cfg_.blocks.size(); }
  bool lower_is_better() const override { return false; }
  std::vector<const snn::Network*> networks() const override { return {&net_->network()}; }
  std::vector<dg::Parameter*> parameters() const override { return net_->network().parameters(); }
  std::vector<std::size_t> gate_sizes() const override { return net_->gate_sizes(); }
  std::size_t train_size(std::size_t env) const override { return train_.at(env).size(); }
  StepOut loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
               Rng& rng) const override;
  double evaluate(std::size_t env, const Gates& gates, Rng& rng) const override;
  Eigen::MatrixXd pilots(std::size_t env, Rng& rng) const override;
  std::vector<std::vector<Eigen::MatrixXd>> sweep_pilots(std::size_t sets, Rng& rng) const override;
  std::vector<Eigen::MatrixXd> sweep_pooled(std::size_t rows, Rng& rng) const override;
  std::size_t n_heldout() const override;
  Eigen::MatrixXd heldout_pilots(std::size_t h, Rng& rng) const override;
  Eigen::MatrixXd heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const override;
  std::vector<NetTrace> probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng& rng) const override;
  void reset() override;

  const bf::SpikingBFNet& net() const { return *net_; }
  const std::vector<bf::BfProblem>& test_problems(std::size_t env) const { return test_.at(env); }
  chan::MimoEnvironment environment(std::uint64_t block) const;

 private:
  snn::GateSet gate_set(const Gates& gates) const;
  Eigen::MatrixXd channel_rows(std::uint64_t block, std::size_t draws, Rng& rng) const;

  BeamformingTaskConfig cfg_;
  std::unique_ptr<bf::SpikingBFNet> net_;
  std::vector<std::vector<bf::BfProblem>> train_, test_;
  std::vector<dg::Tensor> initial_;
};

struct EstimationEnv {
  std::size_t taps = 4;
  double decay = 0.8;
  double doppler = 0.05;
};

struct EstimationTaskConfig {
  std::size_t n_sub = 16, n_sym = 4, n_pilots = 8;
  est::SnnResNetConfig net{};
  std::vector<EstimationEnv> envs{{2, 0.5, 0.01}, {4, 0.8, 0.05}, {6, 0.9, 0.1}, {8, 1.0, 0.2}};
  std::vector<EstimationEnv> sweep{{1, 0.5, 0.0}, {2, 0.6, 0.02}, {3, 0.7, 0.04}, {4, 0.8, 0.06},
                                   {5, 0.85, 0.08}, {6, 0.9, 0.1},  {7, 0.95, 0.15}, {8, 1.0, 0.2}};
  std::vector<EstimationEnv> heldout{{1, 0.55, 0.01}, {2, 0.65, 0.03}, {3, 0.75, 0.05}, {4, 0.82, 0.07},
                                     {5, 0.88, 0.09}, {6, 0.92, 0.12}, {7, 0.97, 0.17}, {8, 0.98, 0.18}};
  double snr_db = 10.0;
  std::size_t n_train = 512;
  std::size_t n_test = 128;
  /// Grids per pilot set (one row of LS pilot estimates each).
  std::size_t pilot_draws = 64;
  void validate() const;
};

/// OFDM channel estimation over environments with different delay and Doppler spreads; metric is MSE.
class EstimationTask : public Task {
 public:
  EstimationTask(EstimationTaskConfig cfg, std::uint64_t seed);

  TaskKind kind() const override { return TaskKind::channel_estimation; }
  std::size_t n_envs() const override { return cfg_.envs.size(); }
  bool lower_is_better() const override { return true; }
  std::vector<const snn::Network*> networks() const override { return {&net_->network()}; }
  std::vector<dg::Parameter*> parameters() const override { return net_->parameters(); }
  std::vector<std::size_t> gate_sizes() const override { return net_->gate_sizes(); }
  std::size_t train_size(std::size_t env) const override { return train_.at(env).grids.size(); }
  StepOut loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
               Rng& rng) const override;
  double evaluate(std::size_t env, const Gates& gates, Rng& rng) const override;
  Eigen::MatrixXd pilots(std::size_t env, Rng& rng) const override;
  std::vector<std::vector<Eigen::MatrixXd>> sweep_pilots(std::size_t sets, Rng& rng) const override;
  std::vector<Eigen::MatrixXd> sweep_pooled(std::size_t rows, Rng& rng) const override;
  std::size_t n_heldout() const override;
  Eigen::MatrixXd heldout_pilots(std::size_t h, Rng& rng) const override;
  Eigen::MatrixXd heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const override;
  std::vector<NetTrace> probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng& rng) const override;
  void reset() override;

  const est::SnnResNet& net() const { return *net_; }
  const chan::OfdmGridSpec& spec() const { return spec_; }
  chan::OfdmChannelConfig channel(const EstimationEnv& e) const;
  double noise_power() const;

  struct Split {
    std::vector<chan::CMatrix> grids;
    std::vector<chan::CVector> ls;
  };
  const Split& test_split(std::size_t env) const { return test_.at(env); }

 private:
  snn::GateSet gate_set(const Gates& gates) const;
  Split draw(const EstimationEnv& e, std::size_t n, Rng& rng) const;
  Eigen::MatrixXd ls_rows(const EstimationEnv& e, std::size_t draws, Rng& rng) const;

  EstimationTaskConfig cfg_;
  chan::OfdmGridSpec spec_;
  std::unique_ptr<est::SnnResNet> net_;
  std::vector<Split> train_, test_;
  std::vector<dg::Tensor> initial_;
};

/// Builds the task of the given kind with default settings.
std::unique_ptr<Task> make_default_task(TaskKind kind, std::uint64_t seed);

}  // namespace spikacom::harness
