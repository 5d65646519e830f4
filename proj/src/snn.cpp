// SPDX-License-Identifier: Apache-2.0
#include "spikacom/snn.hpp"

#include "spikacom/error.hpp"

#include <cmath>

namespace spikacom::snn {

using dg::Parameter;
using dg::Shape;
using dg::Tensor;
using dg::Var;

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double b = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-b, b);
  return t;
}

void check_gate(const GateVector* gate, std::size_t expected, const char* layer) {
  if (gate && gate->size() != expected) {
    throw ShapeError(std::string(layer) + ": gate length " + std::to_string(gate->size()) + " does not match " +
                     std::to_string(expected) + " outputs");
  }
}

Sequence run_lif(dg::Tape& tape, const Sequence& currents, const LifParams& lif, const GateVector* gate) {
  Sequence out;
  out.reserve(currents.size());
  if (currents.empty()) return out;
  Var v = tape.constant(rest_potential(currents.front().shape(), lif));
  Var g = gate ? tape.constant(*gate) : Var{};
  for (const Var& x : currents) {
    auto [s, vn] = lif_step(v, x, lif);
    v = vn;
    out.push_back(gate ? dg::broadcast_mul(s, g, 1) : s);
  }
  return out;
}

}  // namespace

SpikingFc::SpikingFc(std::string name, std::size_t in, std::size_t out, LifParams lif_params, Rng& rng,
                     FcOptions opt)
    : lif(lif_params), in_(in), out_(out) {
  if (in == 0 || out == 0) throw ArgumentError("SpikingFc: dimensions must be positive");
  lif.validate();
  weight = Parameter{name + ".weight", uniform_init({out, in}, in, opt.init_gain, rng)};
  if (opt.bias) bias = Parameter{name + ".bias", Tensor({out})};
}

std::vector<Parameter*> SpikingFc::parameters() {
  std::vector<Parameter*> p{&weight};
  if (!bias.value.empty()) p.push_back(&bias);
  return p;
}

Sequence SpikingFc::forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) {
  check_gate(gate, out_, "SpikingFc");
  Var w = tape.param(weight);
  Var b = bias.value.empty() ? Var{} : tape.param(bias);
  Sequence currents;
  currents.reserve(input.size());
  for (const Var& x : input) {
    if (x.value().rank() != 2 || x.value().dim(1) != in_) {
      throw ShapeError("SpikingFc: expected (B, " + std::to_string(in_) + ") per step, got " + dg::shape_str(x.shape()));
    }
    currents.push_back(b.valid() ? dg::linear(x, w, b) : dg::linear(x, w));
  }
  return run_lif(tape, currents, lif, gate);
}

SpikingConv::SpikingConv(std::string name, std::size_t c_in, std::size_t c_out, std::size_t k, LifParams lif_params,
                         Rng& rng, ConvOptions options)
    : lif(lif_params), opt(options), c_in_(c_in), c_out_(c_out), k_(k) {
  if (c_in == 0 || c_out == 0 || k == 0) throw ArgumentError("SpikingConv: dimensions must be positive");
  lif.validate();
  kernel = Parameter{name + ".kernel", uniform_init({c_out, c_in, k, k}, c_in * k * k, opt.init_gain, rng)};
  if (opt.bias) bias = Parameter{name + ".bias", Tensor({c_out})};
  if (opt.affine) gain = Parameter{name + ".gain", Tensor({c_out}, 1.0)};
}

std::vector<Parameter*> SpikingConv::parameters() {
  std::vector<Parameter*> p{&kernel};
  if (!bias.value.empty()) p.push_back(&bias);
  if (!gain.value.empty()) p.push_back(&gain);
  return p;
}

Sequence SpikingConv::forward(dg::Tape& tape, const Sequence& input, const GateVector* gate) {
  check_gate(gate, c_out_, "SpikingConv");
  Var k = tape.param(kernel);
  Var b = bias.value.empty() ? Var{} : tape.param(bias);
  Var a = gain.value.empty() ? Var{} : tape.param(gain);
  Sequence currents;
  currents.reserve(input.size());
  for (const Var& x : input) {
    Var z = dg::conv2d(x, k, {1, opt.pad});
    if (b.valid()) z = dg::broadcast_add(z, b, 1);
    if (a.valid()) z = dg::broadcast_mul(z, a, 1);
    currents.push_back(z);
  }
  return run_lif(tape, currents, lif, gate);
}

Sequence MaxPool::forward(dg::Tape&, const Sequence& input, const GateVector*) {
  Sequence out;
  for (const Var& x : input) out.push_back(dg::max_pool2d(x, size_));
  return out;
}

Sequence Flatten::forward(dg::Tape&, const Sequence& input, const GateVector*) {
  Sequence out;
  for (const Var& x : input) {
    const Shape& s = x.shape();
    out.push_back(dg::reshape(x, {s[0], dg::shape_numel(s) / s[0]}));
  }
  return out;
}

Readout::Readout(std::string name, std::size_t in, std::size_t out, Rng& rng, bool with_bias, double init_gain)
    : in_(in), out_(out) {
  weight = Parameter{name + ".weight", uniform_init({out, in}, in, init_gain, rng)};
  if (with_bias) bias = Parameter{name + ".bias", Tensor({out})};
}

std::vector<Parameter*> Readout::parameters() {
  std::vector<Parameter*> p{&weight};
  if (!bias.value.empty()) p.push_back(&bias);
  return p;
}

Sequence Readout::forward(dg::Tape& tape, const Sequence& input, const GateVector*) {
  Var w = tape.param(weight);
  Var b = bias.value.empty() ? Var{} : tape.param(bias);
  Sequence out;
  for (const Var& x : input) out.push_back(b.valid() ? dg::linear(x, w, b) : dg::linear(x, w));
  return out;
}

Trace Network::forward(dg::Tape& tape, const Sequence& input, const GateSet& gates) const {
  for (const auto& [idx, g] : gates) {
    if (idx >= layers_.size() || layers_[idx]->gate_size() == 0) {
      throw ArgumentError("gate supplied for non-gateable layer " + std::to_string(idx));
    }
  }
  Trace tr;
  tr.seq.reserve(layers_.size() + 1);
  tr.seq.push_back(input);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto it = gates.find(i);
    tr.seq.push_back(layers_[i]->forward(tape, tr.seq.back(), it == gates.end() ? nullptr : &it->second));
  }
  return tr;
}

std::vector<Parameter*> Network::parameters() const {
  std::vector<Parameter*> out;
  for (const auto& l : layers_)
    for (Parameter* p : l->parameters()) out.push_back(p);
  return out;
}

std::vector<std::size_t> Network::gateable() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i]->gate_size() > 0) out.push_back(i);
  return out;
}

namespace {

// Accumulates per-channel means of a sequence whose steps have the channel on axis 1.
Tensor sequence_channel_rates(const Sequence& seq) {
  const Shape& s = seq.front().shape();
  const std::size_t b = s[0], c = s[1], inner = dg::shape_numel(s) / (b * c);
  Tensor r({c});
  for (const Var& x : seq) {
    const Tensor& v = x.value();
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t j = 0; j < c; ++j)
        for (std::size_t k = 0; k < inner; ++k) r[j] += v[(n * c + j) * inner + k];
  }
  const double denom = static_cast<double>(seq.size() * b * inner);
  for (double& v : r.values()) v /= denom;
  return r;
}

}  // namespace

FiringRateStats Network::layer_rates(const Trace& trace, std::size_t i) const {
  const Layer& l = *layers_.at(i);
  FiringRateStats st;
  const Sequence& pre = trace.seq.at(i);
  const Sequence& post = trace.seq.at(i + 1);
  st.mu = l.analog_input ? Tensor({pre.front().shape()[1]}, 1.0) : sequence_channel_rates(pre);
  st.nu = l.kind() == LayerKind::readout ? Tensor({post.front().shape()[1]}, 1.0) : sequence_channel_rates(post);
  return st;
}

Var time_mean(const Sequence& seq) {
  if (seq.empty()) throw ArgumentError("time_mean of empty sequence");
  Var acc = seq.front();
  for (std::size_t t = 1; t < seq.size(); ++t) acc = dg::add(acc, seq[t]);
  return dg::scale(acc, 1.0 / static_cast<double>(seq.size()));
}

Sequence repeat(dg::Tape& tape, const Tensor& x, std::size_t t_steps) {
  Var v = tape.constant(x);
  return Sequence(t_steps, v);
}

Sequence unstack_time(dg::Tape& tape, const Tensor& train) {
  if (train.rank() < 2) throw ShapeError("expected a (T, ...) train, got " + dg::shape_str(train.shape()));
  const std::size_t t_steps = train.dim(0);
  Shape step(train.shape().begin() + 1, train.shape().end());
  const std::size_t n = dg::shape_numel(step);
  Sequence out;
  for (std::size_t t = 0; t < t_steps; ++t) {
    std::vector<double> vals(train.data() + t * n, train.data() + (t + 1) * n);
    out.push_back(tape.constant(Tensor(step, std::move(vals))));
  }
  return out;
}

Tensor stack_time(const Sequence& seq) {
  if (seq.empty()) return Tensor();
  Shape s = seq.front().shape();
  const std::size_t n = dg::shape_numel(s);
  s.insert(s.begin(), seq.size());
  Tensor out(s);
  for (std::size_t t = 0; t < seq.size(); ++t) std::copy_n(seq[t].value().data(), n, out.data() + t * n);
  return out;
}

bool is_binary(const Tensor& t) {
  for (double v : t.values())
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

Tensor fc_rates(const Tensor& train) {
  if (train.rank() < 2) throw ShapeError("fc_rates: expected (T, N) or (T, B, N), got " + dg::shape_str(train.shape()));
  const std::size_t n = train.shape().back();
  const std::size_t rows = train.size() / n;
  Tensor r({n});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) r[j] += train[i * n + j];
  for (double& v : r.values()) v /= static_cast<double>(rows);
  return r;
}

Tensor conv_rates(const Tensor& train) {
  if (train.rank() != 4 && train.rank() != 5) {
    throw ShapeError("conv_rates: expected (T, C, H, W) or (T, B, C, H, W), got " + dg::shape_str(train.shape()));
  }
  const std::size_t caxis = train.rank() - 3;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < caxis; ++i) outer *= train.dim(i);
  const std::size_t c = train.dim(caxis), inner = train.dim(caxis + 1) * train.dim(caxis + 2);
  Tensor r({c});
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t k = 0; k < inner; ++k) r[j] += train[(o * c + j) * inner + k];
  for (double& v : r.values()) v /= static_cast<double>(outer * inner);
  return r;
}

FiringRateStats firing_rates(const Tensor& pre, const Tensor& post) {
  if (pre.rank() == 0 || post.rank() == 0 || pre.dim(0) != post.dim(0)) {
    throw ShapeError("firing_rates: time axes differ, " + dg::shape_str(pre.shape()) + " vs " +
                     dg::shape_str(post.shape()));
  }
  auto rates = [](const Tensor& t) { return t.rank() >= 4 ? conv_rates(t) : fc_rates(t); };
  return {rates(pre), rates(post)};
}

namespace {

// Brings a (T, ...) train to per-step batched form and reports whether a batch axis was added.
Sequence batched_steps(dg::Tape& tape, const Tensor& input, std::size_t unbatched_rank, bool& added) {
  added = input.rank() == unbatched_rank;
  if (!added) return unstack_time(tape, input);
  Shape s = input.shape();
  s.insert(s.begin() + 1, 1);
  return unstack_time(tape, input.reshaped(s));
}

Tensor drop_batch(const Tensor& train, bool added) {
  if (!added) return train;
  Shape s = train.shape();
  s.erase(s.begin() + 1);
  return train.reshaped(s);
}

}  // namespace

Tensor run_spiking_fc(const Tensor& weights, const Tensor& input, const LifParams& params, const GateVector* gate) {
  if (weights.rank() != 2) throw ShapeError("run_spiking_fc: weights must be (O, I)");
  params.validate();
  dg::Tape tape(false);
  bool added = false;
  Sequence in = batched_steps(tape, input, 2, added);
  Rng rng(0);
  SpikingFc layer("fc", weights.dim(1), weights.dim(0), params, rng, {.bias = false});
  layer.weight.value = weights;
  return drop_batch(stack_time(layer.forward(tape, in, gate)), added);
}

Tensor run_spiking_conv(const Tensor& kernels, const Tensor& input, const LifParams& params, const GateVector* gate) {
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("run_spiking_conv: kernels must be (C_out, C_in, K, K)");
  }
  params.validate();
  dg::Tape tape(false);
  bool added = false;
  Sequence in = batched_steps(tape, input, 4, added);
  Rng rng(0);
  SpikingConv layer("conv", kernels.dim(1), kernels.dim(0), kernels.dim(2), params, rng, {.bias = false});
  layer.kernel.value = kernels;
  return drop_batch(stack_time(layer.forward(tape, in, gate)), added);
}

GradResult unroll_and_grad(const Network& net, const Tensor& input_train,
                           const std::function<Var(const Sequence&)>& loss_fn, const GateSet& gates) {
  dg::Tape tape;
  Trace tr = net.forward(tape, unstack_time(tape, input_train), gates);
  Var loss = loss_fn(tr.output());
  dg::Gradients g = tape.backward(loss);
  GradResult r;
  r.loss = loss.value().item();
  for (Parameter* p : net.parameters()) r.grads.push_back(g.of(*p));
  return r;
}

}  // namespace spikacom::snn
