// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/consolidation.hpp"
#include "spikacom/energy.hpp"
#include "spikacom/hypernet.hpp"
#include "spikacom/optim.hpp"

#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace spikacom::harness {

enum class TaskKind { semantic, beamforming, channel_estimation };

TaskKind parse_task(std::string_view name);
std::string_view task_name(TaskKind t);
/// True when the task metric is an error (MSE) rather than a score.
bool lower_is_better(TaskKind t);

/// One arm of the method matrix: a regulariser plus an optional gate flag.
struct MethodSpec {
  std::string label;
  cl::RegConfig reg;
  bool gate = false;
};

/// The six ablation arms in report order.
const std::vector<std::string>& ablation_labels();
/// Default regularisation strength per task and method label.
double default_lambda(TaskKind task, std::string_view label);
/// Builds an arm from its label ("vanilla", "ewc", "si", "src", "gate", "gate+src").
/// A negative lambda selects the task default.
MethodSpec method_spec(std::string_view label, TaskKind task, double lambda = -1.0);

/// M[i][k]: metric of environment i after training through environment k (k >= i).
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::size_t n) : n_(n), m_(n * n, std::numeric_limits<double>::quiet_NaN()) {}
  std::size_t size() const { return n_; }
  double at(std::size_t i, std::size_t k) const;
  void set(std::size_t i, std::size_t k, double v);
  bool defined(std::size_t i, std::size_t k) const { return i < n_ && k < n_ && i <= k; }
  bool operator==(const Trajectory& o) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> m_;
};

struct Summary {
  double final_avg = 0.0;
  /// Per environment; the last environment has none and is reported as 0.
  std::vector<double> forgetting;
  /// Mean of M[i][K] - M[i][i] over i < K.
  double bwt = 0.0;
};

/// Forgetting uses max_k M[i][k] - M[i][K]; with `lower_is_better` the metric is negated first.
Summary summarize(const Trajectory& t, bool lower_is_better);

struct Stat {
  double mean = 0.0, stddev = 0.0;
};
Stat mean_std(const std::vector<double>& v);

// ----- tasks -----

using Gates = std::vector<snn::GateVector>;

struct NetTrace {
  const snn::Network* net = nullptr;
  snn::Trace trace;
};

struct StepOut {
  dg::Var loss;
  std::vector<NetTrace> traces;
  /// Objects referenced by backward closures (channel draws); kept until the step is done.
  std::vector<std::shared_ptr<const void>> hold;
};

/// A sequence of environments and a model that adapts to them.
class Task {
 public:
  virtual ~Task() = default;
  virtual TaskKind kind() const = 0;
  virtual std::size_t n_envs() const = 0;
  virtual bool lower_is_better() const = 0;
  /// Spiking networks whose weights are consolidated.
  virtual std::vector<const snn::Network*> networks() const = 0;
  /// Parameters updated during adaptation.
  virtual std::vector<dg::Parameter*> parameters() const = 0;
  /// Gate lengths of the modulated layers, in the order gates are passed.
  virtual std::vector<std::size_t> gate_sizes() const = 0;
  virtual std::size_t train_size(std::size_t env) const = 0;
  /// Minibatch loss on training samples `idx` of environment `env`.
  virtual StepOut loss(dg::Tape& tape, std::size_t env, std::span<const std::size_t> idx, const Gates& gates,
                       Rng& rng) const = 0;
  /// Metric on the environment's test split. Must not change model state.
  virtual double evaluate(std::size_t env, const Gates& gates, Rng& rng) const = 0;
  /// One pilot observation set (rows are samples) of environment `env`.
  virtual Eigen::MatrixXd pilots(std::size_t env, Rng& rng) const = 0;
  /// Pilot sets of the environments used to pre-train the hypernet, and pooled rows for their FCD.
  virtual std::vector<std::vector<Eigen::MatrixXd>> sweep_pilots(std::size_t sets, Rng& rng) const = 0;
  virtual std::vector<Eigen::MatrixXd> sweep_pooled(std::size_t rows, Rng& rng) const = 0;
  /// Environments outside the pre-training sweep, for checking how the hypernet generalises.
  virtual std::size_t n_heldout() const = 0;
  /// One pilot set of held-out environment `h`, sized like pilots().
  virtual Eigen::MatrixXd heldout_pilots(std::size_t h, Rng& rng) const = 0;
  virtual Eigen::MatrixXd heldout_pooled(std::size_t h, std::size_t rows, Rng& rng) const = 0;
  /// Traces of every spiking network on a test batch of `env`. The traces live on `tape`.
  virtual std::vector<NetTrace> probe(dg::Tape& tape, std::size_t env, const Gates& gates, Rng& rng) const = 0;
  /// Restores the parameters the task was constructed with.
  virtual void reset() = 0;
};

// ----- sequential runner -----

enum class HypernetMode { frozen, cotrain };

struct HarnessConfig {
  TrainConfig train{};
  std::size_t fisher_samples = 64;
  double si_xi = 0.1;
  HypernetMode hypernet_mode = HypernetMode::frozen;
  std::size_t hypernet_sets = 4;
  std::size_t hypernet_pooled = 8000;
  std::size_t cotrain_epochs = 200;
  ctx::HypernetTrainConfig hypernet{};
  ctx::HyperParams hyper{};
  /// Re-derive gates at evaluation time and check they match the cached training gates.
  bool check_gate_cache = true;
};

struct RunResult {
  std::string task, method;
  std::uint64_t seed = 0;
  Trajectory traj;
  std::vector<double> val;  // validation metric at the end of each environment
  std::size_t gate_mismatches = 0;
  /// Per-inference energy of the final model on each environment, from measured firing rates.
  std::vector<double> energy_pj, ann_energy_pj;
};

struct EnergyEstimate {
  std::vector<energy::LayerDescriptor> stages;  // with measured input rates
  energy::EnergyReport snn, ann;                // spiking model and its ANN twin
};

/// Energy of one inference on `env` from the rates recorded by Task::probe.
EnergyEstimate measure_energy(const Task& task, std::size_t env, const Gates& gates, Rng& rng,
                              const energy::EnergyCosts& costs = {});

/// Hypernet for a task, trained on its pilot sweep.
ctx::Hypernet pretrain_hypernet(const Task& task, const HarnessConfig& cfg, std::uint64_t seed);

/// Trains through the environments in order and evaluates every seen environment after each one.
/// `hypernet` is required when the method is gated; in cotrain mode it is refined in place.
RunResult run_sequence(Task& task, const MethodSpec& method, const HarnessConfig& cfg, std::uint64_t seed,
                       ctx::Hypernet* hypernet = nullptr);

struct AlignmentReport {
  Eigen::MatrixXd fcd;        // pairwise FCD of the held-out environments
  Eigen::MatrixXd gate_dist;  // pairwise cosine distance of their hard gates
  Eigen::MatrixXd gates;      // one row per environment
  double nmse = 0.0;          // against 1 - exp(-beta FCD)
};

/// Gate-versus-FCD agreement of a trained hypernet on the task's held-out environments.
AlignmentReport heldout_alignment(const Task& task, const ctx::Hypernet& hypernet, const HarnessConfig& cfg,
                                  std::uint64_t seed);

/// FNV-1a digest over parameter names and values.
std::uint64_t parameter_hash(std::span<dg::Parameter* const> params);

// ----- reports -----

/// Long-format CSV: task,method,seed,env_i,env_k,metric. Doubles use 17 significant digits.
void write_csv(std::ostream& os, const std::vector<RunResult>& runs);
std::vector<RunResult> read_csv(std::istream& is);

struct MethodSummary {
  std::string task, method;
  std::size_t seeds = 0;
  Stat final_avg, bwt;
  std::vector<Stat> forgetting;
};

/// Groups runs by (task, method) in first-seen order.
std::vector<MethodSummary> summarize_runs(const std::vector<RunResult>& runs);
std::string summary_json(const std::vector<MethodSummary>& s);
/// Fixed-width comparison table.
std::string summary_table(const std::vector<MethodSummary>& s);

/// Writes trajectories.csv, summary.json, summary.txt and plot data (trajectory fan, ablation, energy) into `dir`.
void emit_reports(const std::vector<RunResult>& runs, const std::string& dir);

}  // namespace spikacom::harness
