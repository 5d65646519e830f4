// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/snn.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace spikacom::energy {

struct EnergyCosts {
  double e_mac = 3.2;  // pJ
  double e_ac = 0.1;   // pJ
  double e_mem = 10.0; // pJ
  void validate() const;
};

struct OpCount {
  double n_mac = 0.0, n_ac = 0.0, n_mem = 0.0;
  OpCount& operator+=(const OpCount& o);
  double picojoules(const EnergyCosts& c) const { return c.e_mac * n_mac + c.e_ac * n_ac + c.e_mem * n_mem; }
};

enum class Kind {
  fc_snn, conv_snn, pool_snn, fc_ann, conv_ann, rnn, lstm, transformer,
  matmul, inverse, cholesky, ldpc_enc, ldpc_dec, rbf_interp
};

Kind parse_kind(std::string_view s);
std::string_view kind_name(Kind k);

/// Dimensions by kind:
///   fc_*: {I, O}                 conv_*: {H_out, W_out, C_out, C_in, K}
///   pool_snn: {H_out, W_out, C, K}   rnn, lstm: {T, I, H}   transformer: {T, H}
///   matmul: {m, n, r} (complex)  inverse, cholesky: {n} (complex)
///   ldpc_enc: {n, d_g}           ldpc_dec: {E, N_iter}      rbf_interp: {N, K, P}
struct LayerDescriptor {
  Kind kind = Kind::fc_ann;
  std::vector<double> dims;
  double rate = 1.0;
  std::size_t t_steps = 1;
  bool analog_input = false;
  std::string name;
};

/// Operation count of one stage. Spiking stages scale by T and charge AC, or MAC when
/// their input is analog (every input active, rate taken as 1).
OpCount count_layer(const LayerDescriptor& d);

struct StageEnergy {
  std::string name;
  Kind kind;
  OpCount ops;
  double pj = 0.0;
};

struct EnergyReport {
  std::vector<StageEnergy> stages;
  OpCount ops;
  double total_pj = 0.0;
};

EnergyReport pipeline_energy(const std::vector<LayerDescriptor>& stages, const EnergyCosts& costs = {});

/// Same stage with every spiking kind replaced by its ANN counterpart.
LayerDescriptor ann_twin(const LayerDescriptor& d);
std::vector<LayerDescriptor> ann_twin(const std::vector<LayerDescriptor>& stages);

/// Spike count / (T * neurons) of a (T, ...) train.
double measure_rate(const dg::Tensor& train);
/// Rate of every layer output in a trace (entry 0 is the input).
std::vector<double> measure_snn_rates(const snn::Trace& trace);

/// Descriptors of a spiking network from a recorded trace, with measured input rates.
std::vector<LayerDescriptor> describe_network(const snn::Network& net, const snn::Trace& trace);

/// Matrix operations of one WMMSE sweep (U, W and V updates) for K users.
std::vector<LayerDescriptor> wmmse_iteration(std::size_t k, std::size_t n_tx, std::size_t n_rx, std::size_t d);

}  // namespace spikacom::energy
