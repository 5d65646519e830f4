// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/channel.hpp"
#include "spikacom/snn.hpp"

#include <memory>
#include <vector>

namespace spikacom::sem {

struct DatasetConfig {
  std::size_t classes = 4;
  std::size_t train_per_class = 150;
  std::size_t test_per_class = 50;
  std::size_t t_steps = 8;
  std::size_t channels = 2;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t max_shift = 2;
  double on_rate = 0.3;
  double background_rate = 0.02;
  void validate() const;
};

/// Binary event streams, one (T, C, H, W) tensor per sample.
struct EventSet {
  std::vector<dg::Tensor> samples;
  std::vector<std::size_t> labels;
  std::size_t size() const { return samples.size(); }
};

struct EventDataset {
  std::vector<dg::Tensor> templates;  // (C, H, W) rate maps, one per class
  EventSet train, test;
};

/// Sparse class templates: a few random bars per class and polarity channel.
std::vector<dg::Tensor> make_templates(const DatasetConfig& cfg, Rng& rng);
/// Bernoulli draw per (t, pixel) at the template rates after an integer translation.
dg::Tensor sample_events(const dg::Tensor& rate_map, std::size_t t_steps, int dy, int dx, Rng& rng);
EventDataset gen_dataset(const DatasetConfig& cfg, std::uint64_t seed);
EventSet sample_set(const std::vector<dg::Tensor>& templates, const DatasetConfig& cfg, std::size_t per_class, Rng& rng);
/// Oracle classifier: template with the largest correlation to the empirical rate map
/// (maximised over translations up to `max_shift`).
std::size_t nearest_template(const dg::Tensor& sample, const std::vector<dg::Tensor>& templates, std::size_t max_shift);

struct SemanticConfig {
  std::size_t enc_channels = 16;
  std::size_t enc_blocks = 2;
  std::size_t fc_hidden = 256;
  std::size_t n_symbols = 32;  // on-air symbols per time step (one OOK block)
  std::size_t dec_channels = 8;
  std::size_t dec_hidden = 128;
  std::size_t population = 10;
  double logit_scale = 8.0;
  /// Feed the in-phase and quadrature planes to the decoder next to the received power.
  bool phase_planes = true;
  /// Also gate the decoder's conv channels (the FC layers are always gated).
  bool gate_conv = false;
  /// Biases in the channel encoder and decoder. Biases are shared by every gated sub-network.
  bool bias = true;
  snn::LifParams lif{};
  void validate() const;
};

struct EncoderPretrain {
  std::size_t epochs = 6;
  std::size_t batch_size = 32;
  double lr = 2e-3;
};

/// Which channel the forward pass uses.
struct ChannelSpec {
  enum class Kind { bypass, identity, profile } kind = Kind::profile;
  chan::MultipathProfile profile{};
  static ChannelSpec bypass() { return {Kind::bypass, {}}; }
  static ChannelSpec identity() { return {Kind::identity, {}}; }
  static ChannelSpec of(const chan::MultipathProfile& p) { return {Kind::profile, p}; }
};

/// Gates of the adaptable part, keyed per network.
struct PipelineGates {
  snn::GateSet chanenc, decoder;
};

/// Spiking encoder -> spiking channel encoder -> OOK over the channel -> spiking decoder with
/// population voting.
class SemanticPipeline {
 public:
  SemanticPipeline(const DatasetConfig& data, SemanticConfig cfg, std::uint64_t seed);

  const SemanticConfig& config() const { return cfg_; }
  std::size_t classes() const { return classes_; }
  snn::Network& encoder() { return enc_; }
  snn::Network& chanenc() { return chanenc_; }
  snn::Network& decoder() { return dec_; }
  const snn::Network& encoder() const { return enc_; }
  const snn::Network& chanenc() const { return chanenc_; }
  const snn::Network& decoder() const { return dec_; }

  std::vector<dg::Parameter*> encoder_parameters() const { return enc_.parameters(); }
  /// Channel encoder and decoder parameters (updated during adaptation).
  std::vector<dg::Parameter*> adaptable_parameters() const;
  std::vector<dg::Parameter*> all_parameters() const;
  void freeze_encoder(bool frozen);

  /// Gate lengths of the modulated layers in order: channel-encoder hidden FC, decoder conv when
  /// enabled, decoder hidden FC.
  std::vector<std::size_t> gate_sizes() const;
  PipelineGates split_gates(const std::vector<snn::GateVector>& gates) const;

  /// Per-step encoder outputs for a batch of samples.
  snn::Sequence encode(dg::Tape& tape, const std::vector<const dg::Tensor*>& batch, snn::Trace* trace = nullptr) const;
  /// Encoder spike trains (T, features) of every sample, computed once with recording off.
  std::vector<dg::Tensor> cache_features(const EventSet& set) const;

  struct Output {
    dg::Var logits;  // (B, classes)
    snn::Trace chanenc, decoder;
    std::vector<dg::Var> on_air;  // per step (B, n_symbols), binary
    std::vector<std::unique_ptr<chan::ChannelDraw>> draws;
  };
  /// From per-step encoder features (B, features).
  Output transmit(dg::Tape& tape, const snn::Sequence& features, const ChannelSpec& channel, Rng& rng,
                  const PipelineGates& gates = {}) const;
  /// Stacks cached features of the selected samples into per-step constants.
  snn::Sequence feature_steps(dg::Tape& tape, const std::vector<dg::Tensor>& cache,
                              std::span<const std::size_t> idx) const;

  /// Trains the encoder with an auxiliary rate read-out on clean samples, then freezes it.
  /// Returns the read-out accuracy on `set` after training.
  double pretrain_encoder(const EventSet& set, const EncoderPretrain& cfg, Rng& rng);

  /// Accuracy over a cached set.
  double accuracy(const std::vector<dg::Tensor>& cache, const std::vector<std::size_t>& labels,
                  const ChannelSpec& channel, Rng& rng, const PipelineGates& gates = {}, std::size_t batch = 128) const;

 private:
  SemanticConfig cfg_;
  std::size_t classes_, t_steps_, features_;
  snn::Network enc_, chanenc_, dec_;
};

}  // namespace spikacom::sem
