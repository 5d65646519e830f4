// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spikacom/ops.hpp"

#include <Eigen/Dense>

namespace spikacom::dg {

using CMatrix = Eigen::MatrixXcd;

// Complex matrices on the tape use the real embedding
//   M = A + iB  ->  [[A, -B], [B, A]]
// which turns complex products, inverses and adjoints into ordinary real ones:
// embed(M N) = embed(M) embed(N), embed(M^-1) = embed(M)^-1, embed(M^H) = embed(M)^T.

Tensor embed(const CMatrix& m);
/// Reads the upper-left (real) and lower-left (imaginary) blocks.
CMatrix unembed(const Tensor& e);

/// Embedding assembled from separate real and imaginary parts of equal shape.
Var cembed(Var re, Var im);
Var creal(Var e);
Var cimag(Var e);

inline Var cmatmul(Var a, Var b) { return matmul(a, b); }
inline Var cadjoint(Var e) { return transpose(e); }
inline Var cinverse(Var e) { return inverse(e); }
/// Re tr(M) from its embedding.
inline Var ctrace(Var e) { return scale(trace(e), 0.5); }
/// log det(M) for Hermitian positive definite M (det(embed) = det(M)^2).
inline Var hermitian_logdet(Var e) { return scale(logdet(e), 0.5); }
/// Squared Frobenius norm of M.
inline Var cnorm2(Var e) { return scale(sum(square(e)), 0.5); }

}  // namespace spikacom::dg
