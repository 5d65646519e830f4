// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/lif.hpp"
#include "spikacom/rng.hpp"

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spikacom::snn {

/// Binary mask over post-synaptic neurons (FC) or output channels (conv).
using GateVector = dg::Tensor;
/// Gates keyed by layer index inside a Network.
using GateSet = std::map<std::size_t, GateVector>;
/// Time-major sequence of per-step tensors recorded on one tape.
using Sequence = std::vector<dg::Var>;

enum class LayerKind { fc, conv, pool, flatten, readout };

/// Mean firing rates of the neurons feeding and leaving a layer.
struct FiringRateStats {
  dg::Tensor mu;  // pre-synaptic, one per input neuron or channel
  dg::Tensor nu;  // post-synaptic, one per output neuron or channel
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) = 0;
  virtual std::vector<dg::Parameter*> parameters() { return {}; }
  /// Length of the gate this layer accepts; 0 when the layer cannot be gated.
  virtual std::size_t gate_size() const { return 0; }
  /// True when the layer's input is analog current rather than spikes.
  bool analog_input = false;
};

struct FcOptions {
  bool bias = true;
  double init_gain = 1.0;
};

/// Fully connected LIF layer: per step, I = W s[t] + b, then LIF, then g (.) S.
class SpikingFc : public Layer {
 public:
  SpikingFc(std::string name, std::size_t in, std::size_t out, LifParams lif, Rng& rng, FcOptions opt = {});
  LayerKind kind() const override { return LayerKind::fc; }
  Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) override;
  std::vector<dg::Parameter*> parameters() override;
  std::size_t gate_size() const override { return out_; }

  dg::Parameter weight;  // (out, in)
  dg::Parameter bias;    // (out), empty when disabled
  LifParams lif;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::size_t in_, out_;
};

struct ConvOptions {
  std::size_t pad = 0;
  bool bias = true;
  /// Learned per-channel scale applied to the conv output in place of batch norm.
  bool affine = false;
  double init_gain = 1.0;
};

/// Convolutional LIF layer with channel-level gating Y_c = g_c f(Z_c).
class SpikingConv : public Layer {
 public:
  SpikingConv(std::string name, std::size_t c_in, std::size_t c_out, std::size_t k, LifParams lif, Rng& rng,
              ConvOptions opt = {});
  LayerKind kind() const override { return LayerKind::conv; }
  Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) override;
  std::vector<dg::Parameter*> parameters() override;
  std::size_t gate_size() const override { return c_out_; }

  dg::Parameter kernel;  // (c_out, c_in, k, k)
  dg::Parameter bias;    // (c_out)
  dg::Parameter gain;    // (c_out), only with affine
  LifParams lif;
  ConvOptions opt;
  std::size_t c_in() const { return c_in_; }
  std::size_t c_out() const { return c_out_; }
  std::size_t ksize() const { return k_; }

 private:
  std::size_t c_in_, c_out_, k_;
};

class MaxPool : public Layer {
 public:
  explicit MaxPool(std::size_t size) : size_(size) {}
  LayerKind kind() const override { return LayerKind::pool; }
  Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) override;
  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
};

class Flatten : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) override;
};

/// Non-spiking linear read-out emitting analog values each step.
class Readout : public Layer {
 public:
  Readout(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias = true, double init_gain = 1.0);
  LayerKind kind() const override { return LayerKind::readout; }
  Sequence forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) override;
  std::vector<dg::Parameter*> parameters() override;

  dg::Parameter weight;
  dg::Parameter bias;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::size_t in_, out_;
};

/// Per-layer sequences of one forward pass; entry 0 is the network input.
struct Trace {
  std::vector<Sequence> seq;
  const Sequence& output() const { return seq.back(); }
};

/// Feed-forward stack processed layer by layer over the full time window.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }

  Trace forward(dg::Tape& tape, const Sequence& input, const GateSet& gates = {}) const;
  std::vector<dg::Parameter*> parameters() const;
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) const { return *layers_.at(i); }
  /// Indices of layers that accept a gate.
  std::vector<std::size_t> gateable() const;

  /// Pre/post rates of layer `i` from a trace; analog inputs and read-outs count as rate 1.
  FiringRateStats layer_rates(const Trace& trace, std::size_t i) const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Mean over time (and batch) of a sequence, as a tensor of per-step shape.
dg::Var time_mean(const Sequence& seq);
/// Constant input repeated for t_steps (direct current injection).
Sequence repeat(dg::Tape& tape, const dg::Tensor& x, std::size_t t_steps);
/// Splits a (T, ...) tensor into per-step constants.
Sequence unstack_time(dg::Tape& tape, const dg::Tensor& train);
/// Stacks per-step values into a (T, ...) tensor.
dg::Tensor stack_time(const Sequence& seq);

bool is_binary(const dg::Tensor& t);

/// Rate per neuron from a (T, N) or (T, B, N) train.
dg::Tensor fc_rates(const dg::Tensor& train);
/// Rate per channel from a (T, C, H, W) or (T, B, C, H, W) train, averaged over time and space.
dg::Tensor conv_rates(const dg::Tensor& train);
/// Rates for a pre/post pair sharing T. Conv layout applies to rank >= 4 trains.
FiringRateStats firing_rates(const dg::Tensor& pre, const dg::Tensor& post);

/// Runs a spiking FC layer with the given weights over a (T, I) or (T, B, I) input train.
dg::Tensor run_spiking_fc(const dg::Tensor& weights, const dg::Tensor& input, const LifParams& params,
                          const GateVector* gate = nullptr);
/// Runs a spiking conv layer (stride 1, no padding) over a (T, C, H, W) or (T, B, C, H, W) train.
dg::Tensor run_spiking_conv(const dg::Tensor& kernels, const dg::Tensor& input, const LifParams& params,
                            const GateVector* gate = nullptr);

struct GradResult {
  double loss = 0.0;
  std::vector<dg::Tensor> grads;  // aligned with Network::parameters()
};

/// Forward over the unrolled window, scalar loss from the output sequence, reverse sweep.
GradResult unroll_and_grad(const Network& net, const dg::Tensor& input_train,
                           const std::function<dg::Var(const Sequence&)>& loss_fn, const GateSet& gates = {});

}  // namespace spikacom::snn
