// SPDX-License-Identifier: Apache-2.0
#include "spikacom/lif.hpp"

#include "spikacom/error.hpp"

#include <cmath>

namespace spikacom::snn {

using dg::GradSink;
using dg::Tensor;
using dg::Var;

void LifParams::validate() const {
  if (!(tau >= 1.0)) throw ArgumentError("LIF tau must be >= 1");
  if (!(v_th > v_reset)) throw ArgumentError("LIF threshold must exceed the reset potential");
  if (!(surrogate.alpha > 0)) throw ArgumentError("surrogate alpha must be positive");
}

Tensor rest_potential(const dg::Shape& shape, const LifParams& params) { return Tensor(shape, params.v_reset); }

std::pair<Tensor, LifState> lif_step(const LifState& state, const Tensor& x, const LifParams& p) {
  if (state.v.shape() != x.shape()) {
    throw ShapeError("lif_step: state " + dg::shape_str(state.v.shape()) + " vs input " + dg::shape_str(x.shape()));
  }
  if (!x.all_finite()) throw NumericError("lif_step: non-finite input current");
  Tensor s(x.shape());
  LifState next{Tensor(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double vbar = state.v[i] - (state.v[i] - p.v_reset) / p.tau + x[i];
    s[i] = dg::threshold_value(vbar - p.v_th, p.surrogate);
    next.v[i] = (1.0 - s[i]) * vbar + s[i] * p.v_reset;
  }
  return {std::move(s), std::move(next)};
}

std::pair<Var, Var> lif_step(Var v, Var x, const LifParams& p) {
  dg::Tape& tape = *x.tape;
  const Tensor& vv = v.value();
  const Tensor& xv = x.value();
  if (vv.shape() != xv.shape()) {
    throw ShapeError("lif_step: state " + dg::shape_str(vv.shape()) + " vs input " + dg::shape_str(xv.shape()));
  }
  if (!xv.all_finite()) throw NumericError("lif_step: non-finite input current");

  const double keep = 1.0 - 1.0 / p.tau;
  Tensor vbar_t(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) vbar_t[i] = vv[i] - (vv[i] - p.v_reset) / p.tau + xv[i];
  Var vbar = tape.record(std::move(vbar_t), {v, x}, [v, x, keep](const Tensor& g, GradSink& sink) {
    if (Tensor* gv = sink.slot(v))
      for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += keep * g[i];
    if (Tensor* gx = sink.slot(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });

  const double th = p.v_th, alpha = p.surrogate.alpha;
  Tensor s_t(xv.shape());
  const Tensor& vb = vbar.value();
  for (std::size_t i = 0; i < vb.size(); ++i) s_t[i] = dg::threshold_value(vb[i] - th, p.surrogate);
  Var s = tape.record(std::move(s_t), {vbar}, [vbar, th, alpha](const Tensor& g, GradSink& sink) {
    if (Tensor* gb = sink.slot(vbar)) {
      const Tensor& vb = vbar.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * dg::atan_surrogate_grad(vb[i] - th, alpha);
    }
  });

  const double vr = p.v_reset;
  const bool detach = p.detach_reset;
  Tensor vn_t(xv.shape());
  const Tensor& sv = s.value();
  for (std::size_t i = 0; i < vb.size(); ++i) vn_t[i] = (1.0 - sv[i]) * vb[i] + sv[i] * vr;
  std::vector<Var> ins{vbar};
  if (!detach) ins.push_back(s);
  Var vn = tape.record(std::move(vn_t), ins, [vbar, s, vr, detach](const Tensor& g, GradSink& sink) {
    const Tensor& sv = s.value();
    if (Tensor* gb = sink.slot(vbar))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * (1.0 - sv[i]);
    if (!detach)
      if (Tensor* gs = sink.slot(s)) {
        const Tensor& vb = vbar.value();
        for (std::size_t i = 0; i < g.size(); ++i) (*gs)[i] += g[i] * (vr - vb[i]);
      }
  });
  return {s, vn};
}

}  // namespace spikacom::snn
