// SPDX-License-Identifier: Apache-2.0
#include "spikacom/grad_check.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace spikacom::dg {
namespace {

double evaluate(const ScalarGraph& f, const std::vector<Tensor>& params) {
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, false));
  const double v = f(tape, leaves).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss while probing");
  return v;
}

}  // namespace

double grad_check(const ScalarGraph& f, std::span<const Tensor> params, double eps) {
  if (!(eps > 0)) throw ArgumentError("grad_check: eps must be positive");
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, true));
  Var loss = f(tape, leaves);
  if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: non-finite loss");
  Gradients g = tape.backward(loss);

  std::vector<Tensor> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Tensor analytic = g.of(leaves[k]);
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double x0 = probe[k][i];
      probe[k][i] = x0 + eps;
      const double fp = evaluate(f, probe);
      probe[k][i] = x0 - eps;
      const double fm = evaluate(f, probe);
      probe[k][i] = x0;
      const double central = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - central) / std::max(1.0, std::abs(central)));
    }
  }
  return worst;
}

}  // namespace spikacom::dg
