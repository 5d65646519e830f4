// SPDX-License-Identifier: Apache-2.0
#include "spikacom/tape.hpp"

#include "spikacom/error.hpp"

namespace spikacom::dg {

const Tensor& Var::value() const {
  if (!tape) throw ArgumentError("use of an unbound Var");
  return tape->value(*this);
}

bool Var::requires_grad() const { return tape && tape->requires_grad(id); }

Tensor* GradSink::slot(const Var& v) {
  if (!tape_.requires_grad(v.id)) return nullptr;
  Tensor& g = grads_[v.id];
  if (g.empty() && tape_.value(v).size() != 0) g = Tensor(tape_.value(v).shape());
  return &g;
}

Tensor Gradients::of(const Var& v) const {
  if (v.tape != tape_ || v.id >= grads_.size()) throw ArgumentError("tensor not on this tape");
  if (grads_[v.id].empty()) return Tensor(tape_->value(v).shape());
  return grads_[v.id];
}

Tensor Gradients::of(const Parameter& p) const { return of(tape_->var_of(p)); }

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad && recording_, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  if (auto it = params_.find(&p); it != params_.end()) return Var{this, it->second};
  Var v = leaf(p.value, p.trainable);
  params_.emplace(&p, v.id);
  return v;
}

Var Tape::var_of(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end()) throw ArgumentError("parameter '" + p.name + "' is not bound to this tape");
  return Var{const_cast<Tape*>(this), it->second};
}

void Tape::bind(const Parameter& p, Var v) {
  check_owned(v);
  if (!params_.emplace(&p, v.id).second) throw ArgumentError("parameter '" + p.name + "' is already bound");
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id].requires_grad;
  }
  needs = needs && recording_;
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v);
  return nodes_[v.id].value;
}

void Tape::check_owned(const Var& v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw ArgumentError("tensor not on this tape");
}

Gradients Tape::backward(const Var& loss) const {
  check_owned(loss);
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.size() != 1) throw ShapeError("backward requires a scalar loss, got shape " + shape_str(lv.shape()));
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor(lv.shape(), 1.0);
  GradSink sink(grads, *this);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.backward || grads[i].empty()) continue;
    n.backward(grads[i], sink);
  }
  return Gradients(this, std::move(grads));
}

}  // namespace spikacom::dg
