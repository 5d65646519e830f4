// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/ops.hpp"

namespace spikacom::snn {

struct LifParams {
  double tau = 2.0;
  double v_th = 1.0;
  double v_reset = 0.0;
  /// When true, no gradient flows through the spike that gates the reset.
  bool detach_reset = true;
  dg::SurrogateSpec surrogate{};

  /// Throws ArgumentError unless tau >= 1, v_th > v_reset and alpha > 0.
  void validate() const;
};

struct LifState {
  dg::Tensor v;
};

/// One eager update of a population: returns (spikes, next state).
std::pair<dg::Tensor, LifState> lif_step(const LifState& state, const dg::Tensor& input_current,
                                         const LifParams& params);

/// Recorded update: returns (spikes, next membrane potential).
std::pair<dg::Var, dg::Var> lif_step(dg::Var v, dg::Var input_current, const LifParams& params);

/// Membrane potential at rest for a population of the given shape.
dg::Tensor rest_potential(const dg::Shape& shape, const LifParams& params);

}  // namespace spikacom::snn
