// SPDX-License-Identifier: Apache-2.0
#include "spikacom/semantic.hpp"

#include "spikacom/error.hpp"
#include "spikacom/optim.hpp"

#include <algorithm>
#include <cmath>

namespace spikacom::sem {

using dg::Shape;
using dg::Tensor;
using dg::Var;

namespace {

double rate_at(const Tensor& map, std::size_t c, long y, long x) {
  const auto h = static_cast<long>(map.dim(1)), w = static_cast<long>(map.dim(2));
  if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
  return map[(c * map.dim(1) + static_cast<std::size_t>(y)) * map.dim(2) + static_cast<std::size_t>(x)];
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (logits[row * c + j] > logits[row * c + best]) best = j;
  return best;
}

}  // namespace

void DatasetConfig::validate() const {
  if (classes < 2) throw ConfigError("classes", "need at least 2 classes");
  if (t_steps == 0 || channels == 0 || height == 0 || width == 0) throw ConfigError("dims", "must be positive");
  if (train_per_class == 0) throw ConfigError("train_per_class", "must be positive");
  if (on_rate < 0 || on_rate > 1 || background_rate < 0 || background_rate > 1)
    throw ConfigError("rates", "must lie in [0, 1]");
}

std::vector<Tensor> make_templates(const DatasetConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width;
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    Tensor t({cfg.channels, h, w}, cfg.background_rate);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      for (int bar = 0; bar < 3; ++bar) {
        const bool vertical = rng.bernoulli(0.5);
        const std::size_t len = std::min(vertical ? h : w, std::size_t{5} + rng.below(6));
        const std::size_t y0 = rng.below(vertical ? h - len + 1 : h);
        const std::size_t x0 = rng.below(vertical ? w : w - len + 1);
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t y = vertical ? y0 + i : y0, x = vertical ? x0 : x0 + i;
          t[(c * h + y) * w + x] = cfg.on_rate;
        }
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

Tensor sample_events(const Tensor& rate_map, std::size_t t_steps, int dy, int dx, Rng& rng) {
  if (rate_map.rank() != 3) throw ShapeError("sample_events: rate map must be (C, H, W)");
  const std::size_t c = rate_map.dim(0), h = rate_map.dim(1), w = rate_map.dim(2);
  Tensor s({t_steps, c, h, w});
  std::size_t i = 0;
  for (std::size_t t = 0; t < t_steps; ++t)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x, ++i) {
          const double p = rate_at(rate_map, ch, static_cast<long>(y) - dy, static_cast<long>(x) - dx);
          s[i] = p >= 1.0 ? 1.0 : (p <= 0.0 ? 0.0 : (rng.bernoulli(p) ? 1.0 : 0.0));
        }
  return s;
}

EventSet sample_set(const std::vector<Tensor>& templates, const DatasetConfig& cfg, std::size_t per_class, Rng& rng) {
  EventSet set;
  const auto span = static_cast<std::uint64_t>(2 * cfg.max_shift + 1);
  const int shift = static_cast<int>(cfg.max_shift);
  for (std::size_t n = 0; n < per_class; ++n)
    for (std::size_t k = 0; k < templates.size(); ++k) {
      const int dy = static_cast<int>(rng.below(span)) - shift, dx = static_cast<int>(rng.below(span)) - shift;
      set.samples.push_back(sample_events(templates[k], cfg.t_steps, dy, dx, rng));
      set.labels.push_back(k);
    }
  return set;
}

EventDataset gen_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng root(seed);
  Rng trng = root.split("templates"), a = root.split("train"), b = root.split("test");
  EventDataset d;
  d.templates = make_templates(cfg, trng);
  d.train = sample_set(d.templates, cfg, cfg.train_per_class, a);
  d.test = sample_set(d.templates, cfg, cfg.test_per_class, b);
  return d;
}

std::size_t nearest_template(const Tensor& sample, const std::vector<Tensor>& templates, std::size_t max_shift) {
  if (templates.empty()) throw ArgumentError("nearest_template: no templates");
  const std::size_t t_steps = sample.dim(0), c = sample.dim(1), h = sample.dim(2), w = sample.dim(3);
  std::vector<double> count(c * h * w, 0.0);
  for (std::size_t t = 0; t < t_steps; ++t)
    for (std::size_t i = 0; i < count.size(); ++i) count[i] += sample[t * count.size() + i];
  const auto tt = static_cast<double>(t_steps);
  const int s = static_cast<int>(max_shift);
  std::size_t best = 0;
  double best_ll = -INFINITY;
  for (std::size_t k = 0; k < templates.size(); ++k) {
    for (int dy = -s; dy <= s; ++dy)
      for (int dx = -s; dx <= s; ++dx) {
        double ll = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double p = std::clamp(
                  rate_at(templates[k], ch, static_cast<long>(y) - dy, static_cast<long>(x) - dx), 1e-4, 1 - 1e-4);
              const double n1 = count[(ch * h + y) * w + x];
              ll += n1 * std::log(p) + (tt - n1) * std::log1p(-p);
            }
        if (ll > best_ll) {
          best_ll = ll;
          best = k;
        }
      }
  }
  return best;
}

void SemanticConfig::validate() const {
  if (enc_channels == 0 || enc_blocks == 0 || fc_hidden == 0 || n_symbols == 0 || dec_channels == 0 ||
      dec_hidden == 0 || population == 0)
    throw ConfigError("semantic", "layer sizes must be positive");
  lif.validate();
}

SemanticPipeline::SemanticPipeline(const DatasetConfig& data, SemanticConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), classes_(data.classes), t_steps_(data.t_steps) {
  data.validate();
  cfg_.validate();
  Rng rng = Rng(seed).split("semantic");
  std::size_t c = data.channels, h = data.height, w = data.width;
  for (std::size_t b = 0; b < cfg_.enc_blocks; ++b) {
    enc_.add<snn::SpikingConv>("enc.conv" + std::to_string(b), c, cfg_.enc_channels, 3, cfg_.lif, rng,
                               snn::ConvOptions{.pad = 1, .bias = true, .affine = false, .init_gain = 4.0});
    c = cfg_.enc_channels;
    if (h >= 2 && w >= 2) {
      enc_.add<snn::MaxPool>(2);
      h /= 2;
      w /= 2;
    }
  }
  enc_.add<snn::Flatten>();
  features_ = c * h * w;

  const bool b = cfg_.bias;
  chanenc_.add<snn::SpikingFc>("ce.fc0", features_, cfg_.fc_hidden, cfg_.lif, rng,
                               snn::FcOptions{.bias = b, .init_gain = 4.0});
  chanenc_.add<snn::SpikingFc>("ce.fc1", cfg_.fc_hidden, cfg_.n_symbols, cfg_.lif, rng,
                               snn::FcOptions{.bias = b, .init_gain = 4.0});

  auto& conv = dec_.add<snn::SpikingConv>("dec.conv", cfg_.phase_planes ? 3 : 1, cfg_.dec_channels, 3, cfg_.lif, rng,
                                          snn::ConvOptions{.pad = 1, .bias = b, .affine = false, .init_gain = 2.0});
  conv.analog_input = true;
  dec_.add<snn::Flatten>();
  dec_.add<snn::SpikingFc>("dec.fc0", cfg_.dec_channels * cfg_.n_symbols, cfg_.dec_hidden, cfg_.lif, rng,
                           snn::FcOptions{.bias = b, .init_gain = 3.0});
  dec_.add<snn::SpikingFc>("dec.vote", cfg_.dec_hidden, classes_ * cfg_.population, cfg_.lif, rng,
                           snn::FcOptions{.bias = b, .init_gain = 3.0});
}

std::vector<dg::Parameter*> SemanticPipeline::adaptable_parameters() const {
  auto p = chanenc_.parameters();
  auto d = dec_.parameters();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::vector<dg::Parameter*> SemanticPipeline::all_parameters() const {
  auto p = enc_.parameters();
  auto a = adaptable_parameters();
  p.insert(p.end(), a.begin(), a.end());
  return p;
}

void SemanticPipeline::freeze_encoder(bool frozen) {
  for (dg::Parameter* p : enc_.parameters()) p->trainable = !frozen;
}

std::vector<std::size_t> SemanticPipeline::gate_sizes() const {
  if (cfg_.gate_conv) return {chanenc_.layer(0).gate_size(), dec_.layer(0).gate_size(), dec_.layer(2).gate_size()};
  return {chanenc_.layer(0).gate_size(), dec_.layer(2).gate_size()};
}

PipelineGates SemanticPipeline::split_gates(const std::vector<snn::GateVector>& gates) const {
  PipelineGates g;
  if (gates.empty()) return g;
  const auto sizes = gate_sizes();
  if (gates.size() != sizes.size())
    throw ShapeError("semantic gates: expected " + std::to_string(sizes.size()) + " gate vectors");
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (gates[i].size() != sizes[i]) throw ShapeError("semantic gates: wrong gate length");
  g.chanenc[0] = gates[0];
  if (cfg_.gate_conv) g.decoder[0] = gates[1];
  g.decoder[2] = gates.back();
  return g;
}

snn::Sequence SemanticPipeline::encode(dg::Tape& tape, const std::vector<const Tensor*>& batch,
                                       snn::Trace* trace) const {
  if (batch.empty()) throw ArgumentError("encode: empty batch");
  const Tensor& first = *batch.front();
  const std::size_t t_steps = first.dim(0), per = first.size() / t_steps;
  Shape step{batch.size(), first.dim(1), first.dim(2), first.dim(3)};
  snn::Sequence in;
  for (std::size_t t = 0; t < t_steps; ++t) {
    Tensor x(step);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (batch[b]->shape() != first.shape()) throw ShapeError("encode: samples differ in shape");
      std::copy_n(batch[b]->data() + t * per, per, x.data() + b * per);
    }
    in.push_back(tape.constant(std::move(x)));
  }
  snn::Trace tr = enc_.forward(tape, in);
  snn::Sequence out = tr.output();
  if (trace) *trace = std::move(tr);
  return out;
}

std::vector<Tensor> SemanticPipeline::cache_features(const EventSet& set) const {
  std::vector<Tensor> cache;
  const std::size_t chunk = 64;
  for (std::size_t s = 0; s < set.size(); s += chunk) {
    const std::size_t n = std::min(chunk, set.size() - s);
    std::vector<const Tensor*> batch;
    for (std::size_t i = 0; i < n; ++i) batch.push_back(&set.samples[s + i]);
    dg::Tape tape(false);
    snn::Sequence f = encode(tape, batch);
    const std::size_t t_steps = f.size();
    for (std::size_t i = 0; i < n; ++i) {
      Tensor row({t_steps, features_});
      for (std::size_t t = 0; t < t_steps; ++t)
        std::copy_n(f[t].value().data() + i * features_, features_, row.data() + t * features_);
      cache.push_back(std::move(row));
    }
  }
  return cache;
}

snn::Sequence SemanticPipeline::feature_steps(dg::Tape& tape, const std::vector<Tensor>& cache,
                                              std::span<const std::size_t> idx) const {
  if (idx.empty()) throw ArgumentError("feature_steps: empty batch");
  const std::size_t t_steps = cache.at(idx[0]).dim(0);
  snn::Sequence seq;
  for (std::size_t t = 0; t < t_steps; ++t) {
    Tensor x({idx.size(), features_});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Tensor& row = cache.at(idx[b]);
      if (row.dim(0) != t_steps || row.dim(1) != features_) throw ShapeError("feature_steps: bad cache entry");
      std::copy_n(row.data() + t * features_, features_, x.data() + b * features_);
    }
    seq.push_back(tape.constant(std::move(x)));
  }
  return seq;
}

SemanticPipeline::Output SemanticPipeline::transmit(dg::Tape& tape, const snn::Sequence& features,
                                                    const ChannelSpec& channel, Rng& rng,
                                                    const PipelineGates& gates) const {
  if (features.empty()) throw ArgumentError("transmit: empty sequence");
  Output out;
  out.chanenc = chanenc_.forward(tape, features, gates.chanenc);
  out.on_air = out.chanenc.output();
  const std::size_t b = features.front().shape()[0], n = cfg_.n_symbols;
  const chan::OokConfig ook{n};
  const std::vector<chan::cd> unit{chan::cd{1.0, 0.0}};
  snn::Sequence rx;
  for (const Var& x : out.on_air) {
    Var re, im;
    if (channel.kind == ChannelSpec::Kind::bypass) {
      re = dg::reshape(x, {b, 1, n});
      im = tape.constant(Tensor({b, 1, n}));
    } else {
      out.draws.push_back(std::make_unique<chan::ChannelDraw>(
          channel.kind == ChannelSpec::Kind::identity ? chan::fixed_channel(unit, 0.0, b, n, rng, ook)
                                                      : chan::draw_channel(channel.profile, b, n, rng, ook)));
      Var y = chan::apply_channel(x, *out.draws.back());
      re = dg::slice(y, 1, 0, 1);
      im = dg::slice(y, 1, 1, 1);
    }
    Var power = dg::add(dg::square(re), dg::square(im));
    if (cfg_.phase_planes) {
      const Var planes[] = {re, im, power};
      rx.push_back(dg::reshape(dg::concat(planes, 1), {b, 3, 1, n}));
    } else {
      rx.push_back(dg::reshape(power, {b, 1, 1, n}));
    }
  }
  out.decoder = dec_.forward(tape, rx, gates.decoder);
  Var votes = dg::reshape(snn::time_mean(out.decoder.output()), {b, classes_, cfg_.population});
  out.logits = dg::scale(dg::sum_axis(votes, 2), cfg_.logit_scale / static_cast<double>(cfg_.population));
  return out;
}

double SemanticPipeline::pretrain_encoder(const EventSet& set, const EncoderPretrain& cfg, Rng& rng) {
  if (set.size() == 0) throw ArgumentError("pretrain_encoder: empty set");
  freeze_encoder(false);
  Rng init = rng.split("aux");
  snn::Readout aux("enc.aux", features_, classes_, init, true, 1.0);
  std::vector<dg::Parameter*> params = enc_.parameters();
  for (dg::Parameter* p : aux.parameters()) params.push_back(p);
  Adam opt(params);
  const std::size_t steps_per = (set.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = cfg.epochs * steps_per;
  std::size_t step = 0;
  auto run = [&](dg::Tape& tape, std::span<const std::size_t> idx) {
    std::vector<const Tensor*> batch;
    for (std::size_t i : idx) batch.push_back(&set.samples[i]);
    snn::Sequence f = encode(tape, batch);
    return dg::scale(snn::time_mean(aux.forward(tape, f, nullptr)), 1.0);
  };
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    for (const auto& idx : minibatches(set.size(), cfg.batch_size, rng)) {
      dg::Tape tape;
      Var logits = run(tape, idx);
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(set.labels[i]);
      Var loss = dg::cross_entropy(logits, labels);
      if (!std::isfinite(loss.value().item())) throw NumericError("pretrain_encoder: non-finite loss");
      opt.step(tape.backward(loss), cosine_lr(cfg.lr, step++, total, 0.05 * cfg.lr));
    }
  }
  freeze_encoder(true);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < set.size(); s += 64) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(set.size(), s + 64); ++i) idx.push_back(i);
    dg::Tape tape(false);
    Tensor logits = run(tape, idx).value();
    for (std::size_t r = 0; r < idx.size(); ++r) correct += argmax_row(logits, r) == set.labels[idx[r]];
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double SemanticPipeline::accuracy(const std::vector<Tensor>& cache, const std::vector<std::size_t>& labels,
                                  const ChannelSpec& channel, Rng& rng, const PipelineGates& gates,
                                  std::size_t batch) const {
  if (cache.size() != labels.size() || cache.empty()) throw ArgumentError("accuracy: cache and labels disagree");
  std::size_t correct = 0;
  for (std::size_t s = 0; s < cache.size(); s += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(cache.size(), s + batch); ++i) idx.push_back(i);
    dg::Tape tape(false);
    Output o = transmit(tape, feature_steps(tape, cache, idx), channel, rng, gates);
    const Tensor& logits = o.logits.value();
    for (std::size_t r = 0; r < idx.size(); ++r) correct += argmax_row(logits, r) == labels[idx[r]];
  }
  return static_cast<double>(correct) / static_cast<double>(cache.size());
}

}  // namespace spikacom::sem
