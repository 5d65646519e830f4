// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/tensor.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <deque>
#include <vector>

namespace spikacom::dg {

class Tape;

/// Handle to a tensor recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape != nullptr; }
  bool requires_grad() const;
};

/// Trainable (or frozen) named tensor owned by a model.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Gives backward closures access to the gradient buffers of their inputs.
class GradSink {
 public:
  explicit GradSink(std::vector<Tensor>& grads, const Tape& tape) : grads_(grads), tape_(tape) {}
  /// Zero-initialised accumulation buffer for `v`, or nullptr when `v` needs no gradient.
  Tensor* slot(const Var& v);

 private:
  std::vector<Tensor>& grads_;
  const Tape& tape_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

/// Result of a reverse pass: one gradient per recorded tensor.
class Gradients {
 public:
  Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}
  /// Gradient of the loss w.r.t. `v`; zeros when `v` is disconnected from the loss.
  Tensor of(const Var& v) const;
  Tensor of(const Parameter& p) const;

 private:
  const Tape* tape_;
  std::vector<Tensor> grads_;
};

/// Records forward operations so that a scalar loss can be differentiated in reverse.
///
/// Nodes are appended in execution order, so inputs always precede their consumers and
/// the reverse pass is a single backwards sweep. When recording is disabled, values are
/// still computed but no backward closures are kept.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  void set_recording(bool on) noexcept { recording_ = on; }

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad);
  /// Leaf bound to a model parameter. Repeated calls return the same Var.
  Var param(const Parameter& p);
  /// Var for a parameter previously bound with param(); throws if absent.
  Var var_of(const Parameter& p) const;
  /// Makes later param(p) calls return `v`; used to probe models through leaf tensors.
  void bind(const Parameter& p, Var v);

  /// Appends an op node. `backward` is dropped when no input requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void check_owned(const Var& v) const;

  Gradients backward(const Var& loss) const;

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // deque keeps value references stable across record()
  std::unordered_map<const Parameter*, std::size_t> params_;
  bool recording_;
};

}  // namespace spikacom::dg
