// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/snn.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace spikacom::cl {

enum class Method { none, src, ewc, si, src_gate };

Method parse_method(std::string_view name);
std::string_view method_name(Method m);
bool uses_src(Method m);

struct RegConfig {
  Method method = Method::none;
  double lambda = 0.0;
  /// Number of most recent environments whose anchors are kept; 0 keeps all.
  std::size_t window = 0;
  void validate() const;
};

/// Materialised SRC importance nu mu^T, broadcast over the kernel for conv layers.
/// FC gives (out, in); conv gives (out, in, k, k).
dg::Tensor src_importance(const snn::FiringRateStats& stats, snn::LayerKind kind, std::size_t kernel = 1);

/// Importance and anchor for one parameter of one environment.
/// SRC terms keep only the rate vectors; EWC/SI terms keep a dense omega.
struct ImportanceTerm {
  const dg::Parameter* param = nullptr;
  std::string name;
  dg::Tensor anchor;
  dg::Tensor mu, nu;
  std::size_t kernel = 0;
  dg::Tensor omega;

  bool implicit() const { return omega.empty(); }
  /// Stored importance scalars, anchors excluded.
  std::size_t stored_scalars() const;
};

ImportanceTerm src_term(const dg::Parameter& p, const snn::FiringRateStats& stats, std::size_t kernel = 1);
ImportanceTerm dense_term(const dg::Parameter& p, dg::Tensor omega);

struct EnvImportance {
  std::vector<ImportanceTerm> terms;
};

class ImportanceStore {
 public:
  void close_environment(EnvImportance env);
  const std::vector<EnvImportance>& environments() const { return envs_; }
  std::size_t size() const { return envs_.size(); }
  bool empty() const { return envs_.empty(); }
  void clear() { envs_.clear(); }

 private:
  std::vector<EnvImportance> envs_;
};

/// lambda * sum_m sum_k omega_{m,k} (theta_k - anchor_{m,k})^2, recorded on `tape`.
/// Returns a constant zero when the method is none, lambda is 0 or the store is empty.
dg::Var consolidation_penalty(dg::Tape& tape, const ImportanceStore& store, const RegConfig& cfg);

struct LayerMemory {
  std::string name;
  std::size_t scalars = 0;
};

struct MemoryReport {
  std::vector<LayerMemory> layers;
  std::size_t total = 0;
};

MemoryReport importance_memory(const ImportanceStore& store);

/// Averages layer firing rates over the batches of an epoch.
class RateAccumulator {
 public:
  void add(const snn::Network& net, const snn::Trace& trace);
  /// Rates of layer i; empty stats for layers without weights.
  snn::FiringRateStats rates(std::size_t layer) const;
  std::size_t batches() const { return count_; }
  void reset();

 private:
  std::vector<snn::FiringRateStats> sum_;
  std::size_t count_ = 0;
};

/// SRC terms for the weights of every fc, conv and read-out layer.
EnvImportance src_environment(const snn::Network& net, const RateAccumulator& rates);

/// Weight parameters of a network that consolidation regularises (biases and gains are free).
std::vector<dg::Parameter*> regularized_parameters(const snn::Network& net);

/// Empirical Fisher diagonal: mean over samples of squared per-sample gradients.
/// `loss_of` builds the loss of sample i on the given tape.
std::vector<dg::Tensor> ewc_fisher_diag(std::span<dg::Parameter* const> params, std::size_t n_samples,
                                        const std::function<dg::Var(dg::Tape&, std::size_t)>& loss_of);

/// Path-integral importance tracker.
class SiTracker {
 public:
  explicit SiTracker(std::span<dg::Parameter* const> params, double xi = 0.1);
  /// Adds one update: gradient used for the step and the resulting parameter change.
  void record(std::span<const dg::Tensor> grads, std::span<const dg::Tensor> deltas);
  /// omega_k = sum max(0, -g dtheta) / (total drift^2 + xi).
  std::vector<dg::Tensor> importance() const;
  void restart();

 private:
  std::vector<dg::Parameter*> params_;
  std::vector<dg::Tensor> start_, path_;
  double xi_;
};

/// Stateless form of the SI path integral over recorded (gradient, delta) pairs of one tensor.
dg::Tensor si_accumulate(std::span<const dg::Tensor> grads, std::span<const dg::Tensor> deltas, double xi = 0.1);

}  // namespace spikacom::cl
