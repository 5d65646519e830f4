// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/tape.hpp"

#include <functional>
#include <span>
#include <vector>

namespace spikacom::dg {

/// Arctangent surrogate for the spike threshold: forward Heaviside, backward
/// g'(x) = alpha / (2 (1 + (pi alpha x / 2)^2)).
struct SurrogateSpec {
  double alpha = 2.0;
  /// Replace the forward step by the smooth primitive 1/2 + atan(pi alpha x / 2) / pi,
  /// so that the recorded graph is differentiable exactly (used for gradient checks).
  bool relaxed = false;
};

/// Forward value of the threshold under `spec`.
double threshold_value(double x, const SurrogateSpec& spec);

double atan_surrogate_grad(double x, double alpha);

struct ConvOpts {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Elementwise arithmetic; operands must have identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// a * s where s holds a single element.
Var mul_scalar(Var a, Var s);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Generic elementwise map with its derivative.
Var unary(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df);
Var heaviside(Var a, SurrogateSpec spec = {});
/// Same value, no gradient flows back.
Var detach(Var a);

/// x + v broadcast along `axis` (v has length x.dim(axis)).
Var broadcast_add(Var x, Var v, std::size_t axis);
/// x * v broadcast along `axis`.
Var broadcast_mul(Var x, Var v, std::size_t axis);

Var matmul(Var a, Var b);
Var transpose(Var a);
/// x (B x I) times w^T (w is O x I), plus optional bias of length O.
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var bias);
Var inverse(Var a);
/// log|det a|; throws NumericError unless det a > 0.
Var logdet(Var a);
Var trace(Var a);

Var reshape(Var a, Shape shape);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t len);
Var concat(std::span<const Var> parts, std::size_t axis);
/// Stacks equally shaped tensors along a new leading axis.
Var stack(std::span<const Var> parts);

Var sum(Var a);
Var mean(Var a);
/// Sum over `axis`, which is removed from the shape.
Var sum_axis(Var a, std::size_t axis);

/// x (B, Cin, H, W), k (Cout, Cin, KH, KW) -> (B, Cout, Ho, Wo).
Var conv2d(Var x, Var k, ConvOpts opts = {});
/// Non-overlapping max pooling over the last two axes of a rank-4 tensor.
Var max_pool2d(Var x, std::size_t size);

/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Mean squared difference.
Var mse(Var a, Var b);
/// Sum of elementwise products.
Var dot(Var a, Var b);

}  // namespace spikacom::dg
