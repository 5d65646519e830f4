// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/tape.hpp"

#include <functional>
#include <span>

namespace spikacom::dg {

/// Builds a scalar loss on `tape` from leaves bound to the probed tensors.
using ScalarGraph = std::function<Var(Tape& tape, std::span<const Var> leaves)>;

/// Compares reverse-mode gradients with central differences.
///
/// Returns max over all entries of |analytic - central| / max(1, |central|).
/// Throws NumericError if any probe evaluates to a non-finite loss.
double grad_check(const ScalarGraph& f, std::span<const Tensor> params, double eps = 1e-5);

}  // namespace spikacom::dg
