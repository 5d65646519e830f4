// SPDX-License-Identifier: Apache-2.0
#include "spikacom/complex.hpp"

#include "spikacom/error.hpp"

namespace spikacom::dg {

Tensor embed(const CMatrix& m) {
  const auto r = static_cast<std::size_t>(m.rows()), c = static_cast<std::size_t>(m.cols());
  Tensor e({2 * r, 2 * c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const auto z = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      e.at(i, j) = z.real();
      e.at(i, c + j) = -z.imag();
      e.at(r + i, j) = z.imag();
      e.at(r + i, c + j) = z.real();
    }
  return e;
}

CMatrix unembed(const Tensor& e) {
  if (e.rank() != 2 || e.dim(0) % 2 || e.dim(1) % 2) {
    throw ShapeError("unembed: expected a 2r x 2c tensor, got " + shape_str(e.shape()));
  }
  const std::size_t r = e.dim(0) / 2, c = e.dim(1) / 2;
  CMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = {e.at(i, j), e.at(r + i, j)};
  return m;
}

Var cembed(Var re, Var im) {
  if (re.shape() != im.shape() || re.value().rank() != 2) {
    throw ShapeError("cembed: real part " + shape_str(re.shape()) + " vs imaginary part " + shape_str(im.shape()));
  }
  std::vector<Var> top{re, neg(im)};
  std::vector<Var> bottom{im, re};
  std::vector<Var> rows{concat(top, 1), concat(bottom, 1)};
  return concat(rows, 0);
}

Var creal(Var e) {
  const std::size_t r = e.value().dim(0) / 2, c = e.value().dim(1) / 2;
  return slice(slice(e, 0, 0, r), 1, 0, c);
}

Var cimag(Var e) {
  const std::size_t r = e.value().dim(0) / 2, c = e.value().dim(1) / 2;
  return slice(slice(e, 0, r, r), 1, 0, c);
}

}  // namespace spikacom::dg
